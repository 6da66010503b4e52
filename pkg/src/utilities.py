import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class OutputManager:
    """Handles every file the toolkit writes: CSV tables, summaries, scripts, snapshots."""

    CSV_FLOAT_FORMAT = ".12g"

    @staticmethod
    def write_atomic(path: PathLike, data: Union[str, bytes]) -> Path:
        """Write to a sibling temp file and rename it over the target."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        mode = "wb" if isinstance(data, bytes) else "w"
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as handle:
                handle.write(data)
            os.replace(tmp_name, path)
        except Exception:
            if os.path.exists(tmp_name):
                os.remove(tmp_name)
            raise
        logger.debug(f"Wrote {path} ({len(data)} {'bytes' if mode == 'wb' else 'chars'})")
        return path

    @classmethod
    def format_cell(cls, value: Any) -> str:
        if isinstance(value, bool):
            return str(value).lower()
        if isinstance(value, float):
            return format(value, cls.CSV_FLOAT_FORMAT)
        if hasattr(value, "item"):
            return cls.format_cell(value.item())
        return str(value)

    @classmethod
    def render_csv(cls, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """RFC-4180 CSV text with CRLF line endings and minimal quoting."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cls.format_cell(value) for value in row])
        return buffer.getvalue()

    @classmethod
    def write_csv(cls, path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        return cls.write_atomic(path, cls.render_csv(header, rows))

    @staticmethod
    def render_summary(summary: Dict[str, Any]) -> str:
        return json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n"

    @classmethod
    def write_summary(cls, path: PathLike, summary: Dict[str, Any]) -> Path:
        return cls.write_atomic(path, cls.render_summary(summary))


class CsvReader:
    """Reads a written table back as one dict per row."""

    @staticmethod
    def read(path: PathLike) -> List[Dict[str, str]]:
        with open(path, newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))


def _json_default(value):
    if hasattr(value, "item"):
        return value.item()
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
