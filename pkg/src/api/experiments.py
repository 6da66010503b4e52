import logging
from fastapi import APIRouter, Depends, HTTPException
from pydantic import BaseModel
from typing import List, Optional
from src.api import auth
from src.errors import ValidationFailure
from src.harness.config import parse_config, print_config
from src.harness.figures import catalog

logger = logging.getLogger(__name__)

router = APIRouter(
    prefix="/experiments",
    tags=["experiments"],
    dependencies=[Depends(auth.get_api_key)],
)

class ConfigText(BaseModel):
    text: str

class ValidationReport(BaseModel):
    valid: bool
    errors: List[str] = []
    engine: Optional[str] = None
    sites: Optional[int] = None
    canonical: Optional[str] = None

class FigureEntry(BaseModel):
    figure_id: str
    title: str
    extended_configs: List[str]

@router.post("/validate", response_model=ValidationReport)
def post_validate(config: ConfigText):
    """Parse a run config and list every problem with its line; runs are never started here."""
    try:
        parsed = parse_config(config.text)
        sites = parsed.initial_state().L if parsed.engine == "tebd" else None
        logger.info(f"Validated config {parsed.name!r} ({parsed.engine})")
        return ValidationReport(valid=True, engine=parsed.engine, sites=sites, canonical=print_config(parsed))

    except ValidationFailure as e:
        logger.info(f"Config rejected with {len(e.messages)} errors")
        return ValidationReport(valid=False, errors=e.messages)
    except Exception as e:
        logger.error(f"Failed to validate config: {str(e)}")
        raise HTTPException(status_code=500, detail="Failed to validate config")

@router.get("/figures", response_model=List[FigureEntry])
def get_figures():
    """The reproducible figure catalog."""
    return [FigureEntry(**entry) for entry in catalog()]
