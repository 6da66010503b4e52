import logging
import math
from fastapi import APIRouter, Depends, HTTPException
from pydantic import BaseModel, root_validator
from typing import List, Optional, Union
from src.api import auth
from src.defect_kinematics import (
    EVANESCENT,
    WallParams,
    collision_map,
    group_velocity,
    revival_time,
    scatter,
    transmission_window,
)
from src.errors import DegenerateCollision, DimerlabError, NoCollision

logger = logging.getLogger(__name__)

router = APIRouter(
    prefix="/kinematics",
    tags=["kinematics"],
    dependencies=[Depends(auth.get_api_key)],
)

class ScatterRequest(BaseModel):
    k: float
    alpha: Optional[float] = None
    J_A: Optional[float] = None
    J_B: Optional[float] = None

    @root_validator(skip_on_failure=True)
    def _one_parametrization(cls, values):
        has_alpha = values.get("alpha") is not None
        has_rates = values.get("J_A") is not None and values.get("J_B") is not None
        if has_alpha == has_rates:
            raise ValueError("give either alpha or both J_A and J_B")
        return values

    def wall(self) -> WallParams:
        if self.alpha is not None:
            return WallParams.from_alpha(self.alpha)
        return WallParams(J_A=self.J_A, J_B=self.J_B)

class ScatterResponse(BaseModel):
    k: float
    k_prime: Union[float, str]
    T: float
    R: float
    alpha: float
    in_window: bool
    velocity: float

class WindowResponse(BaseModel):
    alpha: float
    intervals: List[List[float]]
    fraction: float

class CollisionRequest(BaseModel):
    k_a: float
    k_t: float
    J_a: float = 2.0
    J_t: float = 3.0
    L: Optional[int] = None

class CollisionResponse(BaseModel):
    k_a_out: float
    k_t_out: float
    t_c: Optional[float] = None

@router.post("/scatter", response_model=ScatterResponse)
def post_scatter(request: ScatterRequest):
    """Transmission and reflection of a monomer at a hopping-rate step."""
    try:
        wall = request.wall()
        result = scatter(request.k, wall)
        logger.debug(f"Scatter k={request.k:.6f} alpha={wall.alpha:.6f}: T={result.T:.6f}")
        return ScatterResponse(
            k=result.k,
            k_prime=result.k_prime if result.propagating else EVANESCENT.value,
            T=result.T,
            R=result.R,
            alpha=wall.alpha,
            in_window=transmission_window(wall.alpha).contains(request.k),
            velocity=group_velocity(wall.J_A, request.k),
        )

    except DimerlabError as e:
        logger.error(f"Rejected scatter request: {str(e)}")
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.error(f"Failed to evaluate scattering: {str(e)}")
        raise HTTPException(status_code=500, detail="Failed to evaluate scattering")

@router.get("/window", response_model=WindowResponse)
def get_window(alpha: float):
    """Quasi-momenta of the inner band that pass the step."""
    try:
        window = transmission_window(alpha)
        return WindowResponse(
            alpha=alpha,
            intervals=[list(interval) for interval in window.intervals],
            fraction=window.measure / (2.0 * math.pi),
        )

    except DimerlabError as e:
        logger.error(f"Rejected window request alpha={alpha}: {str(e)}")
        raise HTTPException(status_code=400, detail=str(e))

@router.post("/collide", response_model=CollisionResponse)
def post_collide(request: CollisionRequest):
    """Outgoing momenta of a monomer-trimer collision, plus the ring revival time if L is given."""
    try:
        k_a_out, k_t_out = collision_map(request.k_a, request.k_t, request.J_a, request.J_t)
        t_c = None
        if request.L is not None:
            t_c = revival_time(request.L, request.k_a, request.k_t, request.J_a, request.J_t)
        return CollisionResponse(k_a_out=k_a_out, k_t_out=k_t_out, t_c=t_c)

    except (DegenerateCollision, NoCollision) as e:
        logger.info(f"No scattering for k_a={request.k_a:.6f}, k_t={request.k_t:.6f}: {str(e)}")
        raise HTTPException(status_code=409, detail=str(e))
    except DimerlabError as e:
        logger.error(f"Rejected collision request: {str(e)}")
        raise HTTPException(status_code=400, detail=str(e))
