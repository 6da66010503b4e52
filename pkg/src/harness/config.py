"""Run configuration: a small text grammar parsed into validated pydantic models.

    name = fig4_top
    engine = tebd
    model = bose_hubbard { J = 1, U = 100, n_max = 3 }
    state = [seg(0, 32), seg(2, 8, momentum(-pi/2, hole)), seg(2, 8), seg(0, 32)]
    tebd = { dt = 0.02, t_max = 20, chi_max = 200 }
    observables = [site_density_exact_n(1), integrated_population(outside, 1)]

Values are numbers and pi-expressions, quoted strings, bare words, lists,
blocks `{ k = v }`, tagged blocks `name { ... }`, calls `name(args)` and site
ranges `1-31`. A digit-minus-digit run without spaces is always a range.
"""
import json
import logging
import math
import re
from dataclasses import dataclass
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, root_validator, validator

from src.errors import CutoffError, InvalidDefectPlacement, ValidationFailure
from src.harness.observables import (
    IntegratedPopulation,
    MomentumDistributionSpec,
    ObservableSpec,
    Region,
    SchmidtEntropy,
    SiteDensityExactN,
)
from src.lattice_models import HamiltonianSpec
from src.momentum_ed import MomentumGrid
from src.settings import get_settings
from src.symmetric_mps import LocalizedDefect, MomentumDefect, SegmentedInitialState, SegmentSpec
from src.tebd_engine import TebdConfig

logger = logging.getLogger(__name__)

KeyPath = Tuple[Union[str, int], ...]


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class AnalyticSpec(BaseModel):
    alpha: List[float] = [0.25, 0.5, 1.0, 2.0, 4.0]
    points: int = 512
    kmin: Optional[float] = None
    kmax: Optional[float] = None
    packet_k: Optional[float] = None

    class Config:
        extra = "forbid"

    @validator("alpha", pre=True)
    def _scalar_to_list(cls, value):
        return value if isinstance(value, (list, tuple)) else [value]

    @validator("alpha")
    def _positive_ratios(cls, value):
        if not value or any(not a > 0 for a in value):
            raise ValueError("alpha must be a nonempty list of positive ratios")
        return value

    @validator("points")
    def _enough_points(cls, value):
        if value < 2:
            raise ValueError("points must be at least 2")
        return value


class TwoBodySpec(BaseModel):
    L: int = 64
    J_a: float = 2.0
    J_t: float = 3.0
    U: float = 60.0
    gamma: int = 1
    k_a: float
    k_t: float
    t_max: Optional[float] = None
    revivals: float = 2.0
    samples: int = 65

    class Config:
        extra = "forbid"

    @validator("L")
    def _lattice(cls, value):
        if value < 2:
            raise ValueError("need at least two sites")
        limit = get_settings().two_body_max_sites
        if value > limit:
            raise ValueError(f"L={value} exceeds the two-body size limit of {limit} sites")
        return value

    @validator("gamma")
    def _boundary(cls, value):
        if value not in (0, 1):
            raise ValueError("gamma is 1 (ring) or 0 (open chain)")
        return value

    @validator("samples")
    def _samples(cls, value):
        if value < 2:
            raise ValueError("samples must be at least 2")
        return value

    @root_validator(skip_on_failure=True)
    def _momenta_on_grid(cls, values):
        grid = MomentumGrid(values["L"])
        for key in ("k_a", "k_t"):
            grid.index_of(values[key])
        return values


class OutputSpec(BaseModel):
    dir: Optional[str] = None
    prefix: str = "run"
    snapshot: bool = False
    plot_script: bool = True

    class Config:
        extra = "forbid"


Model = Annotated[HamiltonianSpec, Field(discriminator="kind")]
Observable = Annotated[ObservableSpec, Field(discriminator="kind")]

TEBD_OBSERVABLES = "site_density_exact_n, integrated_population, momentum_distribution, schmidt_entropy"


class RunConfig(BaseModel):
    name: str = "run"
    engine: Literal["analytic", "two-body-ed", "tebd"]
    seed: int = 0
    model: Optional[HamiltonianSpec] = Field(None, discriminator="kind")
    state: Optional[List[SegmentSpec]] = None
    tebd: TebdConfig = TebdConfig()
    analytic: Optional[AnalyticSpec] = None
    two_body: Optional[TwoBodySpec] = None
    observables: List[Observable] = []
    output: OutputSpec = OutputSpec()

    class Config:
        extra = "forbid"

    @validator("model", "state", always=True)
    def _tebd_blocks(cls, value, values, field):
        if values.get("engine") == "tebd" and value is None:
            raise ValueError(f"the tebd engine needs a {field.name} block")
        return value

    @validator("analytic", always=True)
    def _analytic_defaults(cls, value, values):
        if values.get("engine") == "analytic" and value is None:
            return AnalyticSpec()
        return value

    @validator("two_body", always=True)
    def _two_body_block(cls, value, values):
        if values.get("engine") == "two-body-ed" and value is None:
            raise ValueError("the two-body-ed engine needs a two_body block with at least k_a and k_t")
        return value

    @validator("observables", always=True)
    def _tebd_observables(cls, value, values):
        if values.get("engine") == "tebd" and not value:
            raise ValueError(f"a tebd run needs at least one observable; choose from {TEBD_OBSERVABLES}")
        return value

    def initial_state(self) -> SegmentedInitialState:
        return SegmentedInitialState(segments=self.state)


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

TOKEN_SPEC = [
    ("COMMENT", r"#[^\n]*"),
    ("NEWLINE", r"\n"),
    ("SKIP", r"[ \t\r]+"),
    ("RANGE", r"\d+-\d+(?![\w.])"),
    ("NUMBER", r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"),
    ("STRING", r'"(?:[^"\\\n]|\\.)*"'),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("OP", r"[=\[\]{}(),+\-*/]"),
    ("MISMATCH", r"."),
]
TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in TOKEN_SPEC))

CONSTANTS = {"pi": math.pi, "inf": math.inf}
BOOLEANS = {"true": True, "false": False}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    start: int
    end: int


def tokenize(text: str) -> List[Token]:
    tokens, line = [], 1
    for match in TOKEN_RE.finditer(text):
        kind = match.lastgroup
        if kind == "NEWLINE":
            line += 1
            continue
        if kind in ("SKIP", "COMMENT"):
            continue
        if kind == "MISMATCH":
            raise ValidationFailure([f"line {line}: unexpected character {match.group()!r}"])
        tokens.append(Token(kind, match.group(), line, match.start(), match.end()))
    tokens.append(Token("EOF", "", line, len(text), len(text)))
    return tokens


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

# positional parameter names of every call form
CALL_SIGNATURES: Dict[str, Tuple[str, ...]] = {
    "seg": ("n", "l", "defect", "species"),
    "momentum": ("k", "sign"),
    "localized": ("site", "sign"),
    "site_density_exact_n": ("n", "species"),
    "integrated_population": ("region", "n", "species"),
    "momentum_distribution": ("species",),
    "schmidt_entropy": ("bond",),
}
SIGN_WORDS = {"hole": -1, "particle": 1}


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0
        self.lines: Dict[KeyPath, int] = {}

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        token = self.peek()
        self.pos += 1
        return token

    def at(self, kind: str, text: Optional[str] = None, offset: int = 0) -> bool:
        token = self.peek(offset)
        return token.kind == kind and (text is None or token.text == text)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            token = self.peek()
            wanted = text or kind.lower()
            found = token.text or "end of input"
            raise ValidationFailure([f"line {token.line}: expected {wanted!r}, found {found!r}"])
        return self.advance()

    def fail(self, token: Token, message: str):
        raise ValidationFailure([f"line {token.line}: {message}"])

    # statements -----------------------------------------------------------

    def document(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {}
        while not self.at("EOF"):
            self.statement(data, ())
        return data

    def statement(self, target: Dict[str, Any], path: KeyPath):
        key = self.expect("IDENT")
        self.expect("OP", "=")
        if key.text in target:
            self.fail(key, f"duplicate key {key.text!r}")
        self.lines[path + (key.text,)] = key.line
        target[key.text] = self.value(path + (key.text,))
        if self.at("OP", ","):
            self.advance()

    def block(self, path: KeyPath) -> Dict[str, Any]:
        self.expect("OP", "{")
        data: Dict[str, Any] = {}
        while not self.at("OP", "}"):
            if self.at("EOF"):
                self.fail(self.peek(), "unterminated block")
            self.statement(data, path)
        self.advance()
        return data

    # values ---------------------------------------------------------------

    def value(self, path: KeyPath) -> Any:
        token = self.peek()
        self.lines.setdefault(path, token.line)
        if self.at("OP", "["):
            return self.list_(path)
        if self.at("OP", "{"):
            return self.block(path)
        if token.kind == "STRING":
            self.advance()
            return json.loads(token.text)
        if token.kind == "RANGE":
            self.advance()
            lo, hi = token.text.split("-")
            return (int(lo), int(hi))
        if token.kind == "IDENT" and token.text not in CONSTANTS:
            if self.at("OP", "{", 1):
                self.advance()
                return {"kind": token.text, **self.block(path)}
            if self.at("OP", "(", 1):
                return self.call(path)
            if token.text in BOOLEANS:
                self.advance()
                return BOOLEANS[token.text]
            return self.word()
        return self.expression()

    def list_(self, path: KeyPath) -> List[Any]:
        self.expect("OP", "[")
        items: List[Any] = []
        while not self.at("OP", "]"):
            if self.at("EOF"):
                self.fail(self.peek(), "unterminated list")
            items.append(self.value(path + (len(items),)))
            if not self.at("OP", "]"):
                self.expect("OP", ",")
        self.advance()
        return items

    def word(self) -> str:
        """A bare identifier; hyphen-joined words written without spaces (two-body-ed) stay one word."""
        parts = [self.advance()]
        while (
            self.at("OP", "-")
            and self.at("IDENT", offset=1)
            and self.peek().start == parts[-1].end
            and self.peek(1).start == self.peek().end
        ):
            self.advance()
            parts.append(self.advance())
        return "-".join(p.text for p in parts)

    def call(self, path: KeyPath) -> Any:
        name = self.advance()
        self.expect("OP", "(")
        if name.text == "sites":
            return self.sites_call(name)
        signature = CALL_SIGNATURES.get(name.text)
        if signature is None:
            self.fail(name, f"unknown function {name.text!r}; known: {', '.join(sorted(CALL_SIGNATURES) + ['sites'])}")

        args: Dict[str, Any] = {}
        position = 0
        while not self.at("OP", ")"):
            if self.at("EOF"):
                self.fail(self.peek(), f"unterminated call to {name.text}")
            if self.at("IDENT") and self.at("OP", "=", 1):
                key = self.advance().text
                self.advance()
                if key not in signature:
                    self.fail(name, f"{name.text}() has no parameter {key!r}")
            else:
                if position >= len(signature):
                    self.fail(name, f"{name.text}() takes at most {len(signature)} arguments")
                key = signature[position]
                position += 1
            if key in args:
                self.fail(name, f"{name.text}() got {key!r} twice")
            field_name = "length" if (name.text, key) == ("seg", "l") else key
            self.lines[path + (field_name,)] = self.peek().line
            args[field_name] = self.value(path + (field_name,))
            if not self.at("OP", ")"):
                self.expect("OP", ",")
        self.advance()

        if "sign" in args and isinstance(args["sign"], str):
            if args["sign"] not in SIGN_WORDS:
                self.fail(name, f"sign must be hole or particle, got {args['sign']!r}")
            args["sign"] = SIGN_WORDS[args["sign"]]
        if name.text == "seg":
            return args
        return {"kind": name.text, **args}

    def sites_call(self, name: Token) -> Dict[str, Any]:
        intervals = []
        while not self.at("OP", ")"):
            token = self.advance()
            if token.kind == "RANGE":
                lo, hi = token.text.split("-")
                intervals.append((int(lo), int(hi)))
            elif token.kind == "NUMBER" and token.text.isdigit():
                intervals.append((int(token.text), int(token.text)))
            else:
                self.fail(token, f"sites() takes site numbers or ranges like 1-31, got {token.text!r}")
            if not self.at("OP", ")"):
                self.expect("OP", ",")
        self.advance()
        return {"kind": "sites", "intervals": intervals}

    # arithmetic -----------------------------------------------------------

    def expression(self) -> Union[int, float]:
        value = self.term()
        while self.at("OP", "+") or self.at("OP", "-"):
            op = self.advance().text
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> Union[int, float]:
        value = self.unary()
        while self.at("OP", "*") or self.at("OP", "/"):
            op = self.advance()
            rhs = self.unary()
            if op.text == "*":
                value = value * rhs
            elif rhs == 0:
                self.fail(op, "division by zero")
            else:
                value = value / rhs
        return value

    def unary(self) -> Union[int, float]:
        if self.at("OP", "-"):
            self.advance()
            return -self.unary()
        if self.at("OP", "+"):
            self.advance()
            return self.unary()
        return self.atom()

    def atom(self) -> Union[int, float]:
        token = self.advance()
        if token.kind == "NUMBER":
            if re.fullmatch(r"\d+", token.text):
                return int(token.text)
            return float(token.text)
        if token.kind == "IDENT" and token.text in CONSTANTS:
            return CONSTANTS[token.text]
        if token.kind == "OP" and token.text == "(":
            value = self.expression()
            self.expect("OP", ")")
            return value
        self.fail(token, f"expected a number, found {token.text or 'end of input'!r}")


def evaluate_expression(text: str) -> float:
    """Numeric value of a standalone expression such as `13*pi/16`."""
    parser = _Parser(tokenize(text))
    value = parser.expression()
    if not parser.at("EOF"):
        parser.fail(parser.peek(), f"unexpected {parser.peek().text!r} after expression")
    return float(value)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _line_for(loc: Sequence[Union[str, int]], lines: Dict[KeyPath, int]) -> Optional[int]:
    loc = tuple(part for part in loc if part != "__root__")
    for cut in range(len(loc), 0, -1):
        line = lines.get(loc[:cut])
        if line is not None:
            return line
    return None


def _message(loc: Sequence[Union[str, int]], msg: str, lines: Dict[KeyPath, int]) -> str:
    line = _line_for(loc, lines)
    where = ".".join(str(part) for part in loc if part != "__root__") or "config"
    prefix = f"line {line}: " if line is not None else ""
    return f"{prefix}{where}: {msg}"


def _semantic_errors(config: RunConfig, lines: Dict[KeyPath, int]) -> List[str]:
    """Checks that need several blocks at once: segments vs model space, observables vs lattice."""
    errors: List[str] = []

    if config.engine != "tebd":
        return errors

    initial = config.initial_state()
    space = config.model.local_space()
    L = initial.L
    if config.model.L is not None and config.model.L != L:
        errors.append(_message(("model", "L"), f"model declares L={config.model.L} but the state has {L} sites", lines))

    for i, segment in enumerate(config.state):
        try:
            space.site_state(segment.n)
            if segment.defect is not None:
                space.site_state(segment.n, segment.defect.sign, segment.species)
        except (CutoffError, InvalidDefectPlacement) as e:
            errors.append(_message(("state", i), str(e), lines))

    has_vacuum = any(s.n == 0 for s in config.state)
    for i, spec in enumerate(config.observables):
        loc = ("observables", i)
        species = getattr(spec, "species", None)
        if species is not None and species not in space.species:
            errors.append(_message(loc, f"species {species!r} not in the {space.kind} space {space.species}", lines))
            continue
        if isinstance(spec, (SiteDensityExactN, IntegratedPopulation)):
            if spec.n not in set(space.occupations.tolist()):
                allowed = sorted(n for n in set(space.occupations.tolist()) if n >= 0)
                errors.append(_message(loc, f"occupation n={spec.n} is not resolved by the {space.kind} space (allowed {allowed})", lines))
        if isinstance(spec, IntegratedPopulation):
            region = spec.region
            if region.kind == "outside" and not has_vacuum:
                errors.append(_message(loc, "region 'outside' needs at least one n=0 segment", lines))
            for lo, hi in region.intervals:
                if hi > L:
                    errors.append(_message(loc, f"interval {lo}-{hi} outside the lattice 1..{L}", lines))
        if isinstance(spec, SchmidtEntropy) and spec.bond is not None and not 1 <= spec.bond <= L - 1:
            errors.append(_message(loc, f"bond {spec.bond} outside 1..{L - 1}", lines))
        if isinstance(spec, MomentumDistributionSpec) and spec.species is None:
            errors.append(_message(loc, "momentum_distribution needs a species", lines))
    return errors


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text; every problem found is reported at once with its line."""
    parser = _Parser(tokenize(text))
    data = parser.document()
    try:
        config = RunConfig.parse_obj(data)
    except ValidationError as e:
        messages = [_message(err["loc"], err["msg"], parser.lines) for err in e.errors()]
        logger.debug(f"Config rejected with {len(messages)} errors")
        raise ValidationFailure(messages)

    errors = _semantic_errors(config, parser.lines)
    if errors:
        raise ValidationFailure(errors)
    logger.debug(f"Parsed config {config.name!r} for engine {config.engine}")
    return config


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

BARE_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z_][A-Za-z0-9_]*)*")
RESERVED_WORDS = set(CONSTANTS) | set(BOOLEANS) | set(SIGN_WORDS) | {"outside", "inside"}


def _scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        if BARE_WORD.fullmatch(value) and value.split("-")[0] not in RESERVED_WORDS:
            return value
        return json.dumps(value)
    raise TypeError(f"cannot print {type(value).__name__}")


def _render(value: Any) -> str:
    if isinstance(value, BaseModel):
        return _render_model(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_render(v) for v in value) + "]"
    return _scalar(value)


def _fields(model: BaseModel, skip: Sequence[str] = ()) -> List[Tuple[str, Any]]:
    return [(k, getattr(model, k)) for k in model.__fields__ if k not in skip and getattr(model, k) is not None]


def _call(name: str, args: List[Tuple[str, Any]]) -> str:
    return f"{name}(" + ", ".join(f"{k} = {_render(v)}" for k, v in args) + ")"


def _render_model(model: BaseModel) -> str:
    if isinstance(model, SegmentSpec):
        args = [("l" if k == "length" else k, v) for k, v in _fields(model)]
        return _call("seg", args)
    if isinstance(model, (LocalizedDefect, MomentumDefect)):
        args = [(k, ("hole" if v < 0 else "particle") if k == "sign" else v) for k, v in _fields(model, ("kind",))]
        return _call(model.kind, args)
    if isinstance(model, Region):
        if model.kind != "sites":
            return model.kind
        return "sites(" + ", ".join(f"{lo}-{hi}" for lo, hi in model.intervals) + ")"
    if isinstance(model, (SiteDensityExactN, IntegratedPopulation, MomentumDistributionSpec, SchmidtEntropy)):
        return _call(model.kind, _fields(model, ("kind",)))
    body = ", ".join(f"{k} = {_render(v)}" for k, v in _fields(model, ("kind",)))
    prefix = f"{model.kind} " if "kind" in model.__fields__ else ""
    return prefix + "{ " + body + " }" if body else prefix + "{ }"


def print_config(config: RunConfig) -> str:
    """Canonical config text; parse_config(print_config(c)) == c."""
    lines = []
    for key, value in _fields(config):
        if key == "state" or (key == "observables" and value):
            items = ",\n".join(f"    {_render(v)}" for v in value)
            lines.append(f"{key} = [\n{items},\n]")
        elif key == "observables":
            continue
        else:
            lines.append(f"{key} = {_render(value)}")
    return "\n".join(lines) + "\n"
