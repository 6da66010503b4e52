"""Single-particle scattering at a hopping-rate step and two-defect collision kinematics.

A monomer hops with rate J_A on one side of a domain wall and J_B on the other
(alpha = J_B / J_A). Inside a dimer cluster the monomer rate is 2J and the
trimer rate is 3J; on vacuum the monomer hops with J.
"""
import enum
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, validator
from scipy import linalg, optimize

from src.errors import DegenerateCollision, KinematicsDomainError, NoCollision

logger = logging.getLogger(__name__)

MONOMER_RATE_IN_CLUSTER = 2.0
TRIMER_RATE_IN_CLUSTER = 3.0
MONOMER_RATE_ON_VACUUM = 1.0

COLLISION_SEEDS = 2048
COLLISION_IDENTITY_TOL = 1e-8
COLLISION_RESIDUAL_TOL = 1e-12


class Evanescent(enum.Enum):
    """Marker for a refracted wave that decays instead of propagating."""

    EVANESCENT = "evanescent"


EVANESCENT = Evanescent.EVANESCENT

QuasiMomentum = Union[float, Evanescent]


class WallParams(BaseModel):
    J_A: float
    J_B: float

    @validator("J_A", "J_B")
    def _positive_rate(cls, value):
        if not value > 0:
            raise ValueError("hopping rates must be positive")
        return value

    @property
    def alpha(self) -> float:
        return self.J_B / self.J_A

    @classmethod
    def from_alpha(cls, alpha: float, J_A: float = 1.0) -> "WallParams":
        return cls(J_A=J_A, J_B=alpha * J_A)


@dataclass(frozen=True)
class ScatteringResult:
    k: float
    k_prime: QuasiMomentum
    rho: complex
    tau: complex
    T: float
    R: float

    @property
    def propagating(self) -> bool:
        return self.k_prime is not EVANESCENT


@dataclass(frozen=True)
class DefectKinematics:
    J_mu: float
    k: float

    @property
    def velocity(self) -> float:
        return group_velocity(self.J_mu, self.k)

    @property
    def energy(self) -> float:
        return -2.0 * self.J_mu * math.cos(self.k)


@dataclass(frozen=True)
class TransmissionWindow:
    alpha: float
    intervals: Tuple[Tuple[float, float], ...]

    def contains(self, k: float) -> bool:
        k = wrap_momentum(k)
        return any(lo < k < hi for lo, hi in self.intervals)

    @property
    def measure(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)


@dataclass(frozen=True)
class TransmissionTable:
    alpha: float
    k: np.ndarray
    T: np.ndarray
    R: np.ndarray

    def rows(self):
        return zip(self.k.tolist(), self.T.tolist(), self.R.tolist())


def wrap_momentum(k: float) -> float:
    """Reduce a quasi-momentum to (-pi, pi]."""
    wrapped = math.remainder(k, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def group_velocity(J_mu: float, k: float) -> float:
    return 2.0 * J_mu * math.sin(k)


def _check_ratio(alpha: float):
    if not alpha > 0 or not math.isfinite(alpha):
        raise KinematicsDomainError(f"alpha must be positive and finite, got {alpha}")


def refract(k: float, alpha: float) -> QuasiMomentum:
    """Quasi-momentum on the far side of the wall, or EVANESCENT if the energy has no band partner."""
    if not 0.0 < k < math.pi:
        raise KinematicsDomainError(f"incident quasi-momentum must lie in (0, pi), got {k}")
    _check_ratio(alpha)

    c = math.cos(k) / alpha
    if abs(c) >= 1.0:
        return EVANESCENT
    return math.acos(c)


def scatter(k: float, wall: WallParams) -> ScatteringResult:
    """Reflection and transmission of a plane wave incident from the J_A side."""
    if -math.pi < k < 0.0:
        # T(-k) = T(k): mirror onto the left-incident convention
        k = -k
    alpha = wall.alpha
    k_prime = refract(k, alpha)

    J_A, J_B = wall.J_A, wall.J_B
    if k_prime is EVANESCENT:
        # decaying branch of exp(ik') on the J_B side
        c = math.cos(k) / alpha
        z = c - math.copysign(math.sqrt(c * c - 1.0), c)
    else:
        z = np.exp(1j * k_prime)

    numerator = J_B * z - J_A * np.exp(1j * k)
    denominator = J_A * np.exp(-1j * k) - J_B * z
    rho = complex(numerator / denominator)
    tau = 1.0 + rho

    if k_prime is EVANESCENT:
        return ScatteringResult(k=k, k_prime=EVANESCENT, rho=rho, tau=tau, T=0.0, R=1.0)

    R = abs(rho) ** 2
    T = alpha * math.sin(k_prime) / math.sin(k) * abs(tau) ** 2
    return ScatteringResult(k=k, k_prime=k_prime, rho=rho, tau=tau, T=T, R=R)


def transmission_window(alpha: float) -> TransmissionWindow:
    """Open k-intervals in (-pi, pi] whose band energy has a propagating partner across the wall."""
    _check_ratio(alpha)
    if alpha >= 1.0:
        intervals = ((-math.pi, 0.0), (0.0, math.pi))
    else:
        edge = math.acos(alpha)
        intervals = ((-(math.pi - edge), -edge), (edge, math.pi - edge))
    return TransmissionWindow(alpha=alpha, intervals=intervals)


def transmission_scan(
    alpha: float,
    n_points: int,
    k_min: Optional[float] = None,
    k_max: Optional[float] = None,
) -> TransmissionTable:
    """T(k) and R(k) on a uniform grid; the default grid excludes the band edges 0 and pi."""
    if n_points < 2:
        raise KinematicsDomainError(f"need at least 2 grid points, got {n_points}")
    wall = WallParams.from_alpha(alpha)

    if k_min is None and k_max is None:
        ks = np.linspace(0.0, math.pi, n_points + 2)[1:-1]
    else:
        lo = k_min if k_min is not None else math.pi / (n_points + 1)
        hi = k_max if k_max is not None else math.pi - math.pi / (n_points + 1)
        if not 0.0 < lo < hi < math.pi:
            raise KinematicsDomainError(f"scan range must satisfy 0 < kmin < kmax < pi, got ({lo}, {hi})")
        ks = np.linspace(lo, hi, n_points)

    results = [scatter(float(k), wall) for k in ks]
    table = TransmissionTable(
        alpha=alpha,
        k=ks,
        T=np.array([r.T for r in results]),
        R=np.array([r.R for r in results]),
    )
    logger.debug(f"Transmission scan alpha={alpha}: {n_points} points, max T={table.T.max():.6f}")
    return table


def escape_fraction_uniform(alpha: float, n_points: int = 4096) -> float:
    """Average of T(k) over a uniform quasi-momentum distribution, as for a localized defect."""
    table = transmission_scan(alpha, n_points)
    return float(np.mean(table.T))


def _collision_residual(x, k_a, k_t, J_a, J_t):
    total = k_a + k_t
    return J_a * np.cos(k_a) + J_t * np.cos(k_t) - J_a * np.cos(x) - J_t * np.cos(total - x)


def _same_angle(x: float, y: float, tol: float) -> bool:
    return abs(wrap_momentum(x - y)) < tol


def collision_map(k_a: float, k_t: float, J_a: float, J_t: float) -> Tuple[float, float]:
    """Outgoing quasi-momenta of a monomer-trimer collision conserving quasi-momentum and energy."""
    if not (J_a > 0 and J_t > 0):
        raise KinematicsDomainError(f"hopping rates must be positive, got J_a={J_a}, J_t={J_t}")

    if _same_angle(k_a, k_t, COLLISION_IDENTITY_TOL):
        raise DegenerateCollision(f"defects share quasi-momentum k={k_a:.6g}; no scattering partner")

    if math.isclose(J_a, J_t, rel_tol=0.0, abs_tol=1e-14 * max(J_a, J_t)):
        return wrap_momentum(k_t), wrap_momentum(k_a)

    seeds = np.linspace(-math.pi, math.pi, COLLISION_SEEDS + 1)
    values = _collision_residual(seeds, k_a, k_t, J_a, J_t)

    roots: List[float] = []
    for lo, hi, f_lo, f_hi in zip(seeds[:-1], seeds[1:], values[:-1], values[1:]):
        if f_lo == 0.0:
            candidate = lo
        elif f_lo * f_hi < 0.0:
            candidate = optimize.brentq(
                _collision_residual, lo, hi, args=(k_a, k_t, J_a, J_t), xtol=1e-15, rtol=1e-15
            )
        else:
            continue
        candidate = wrap_momentum(candidate)
        if _same_angle(candidate, k_a, COLLISION_IDENTITY_TOL):
            continue
        if any(_same_angle(candidate, r, COLLISION_IDENTITY_TOL) for r in roots):
            continue
        roots.append(candidate)

    if not roots:
        raise DegenerateCollision(
            f"only the identity conserves energy for k_a={k_a:.6g}, k_t={k_t:.6g}"
        )

    k_a_out = roots[0]
    residual = abs(_collision_residual(k_a_out, k_a, k_t, J_a, J_t))
    if residual > COLLISION_RESIDUAL_TOL * max(J_a, J_t):
        logger.warning(f"Collision root residual {residual:.3e} above tolerance")
    if len(roots) > 1:
        logger.debug(f"Collision map found {len(roots)} nontrivial roots, using {k_a_out:.12f}")

    k_t_out = wrap_momentum(k_a + k_t - k_a_out)
    return k_a_out, k_t_out


def revival_time(L: int, k_a: float, k_t: float, J_a: float, J_t: float) -> float:
    """Time between returns of the two-defect momentum distribution on a ring of L sites."""
    if L < 2:
        raise KinematicsDomainError(f"need at least two sites, got L={L}")
    monomer, trimer = DefectKinematics(J_a, k_a), DefectKinematics(J_t, k_t)
    # each defect's sin k term is half its group velocity 2 J sin k
    relative = 0.5 * (trimer.velocity - monomer.velocity)
    if abs(relative) < 1e-14 * max(J_a, J_t):
        raise NoCollision(f"equal group velocities for k_a={k_a:.6g}, k_t={k_t:.6g}")
    return (L - 1) / abs(relative)


def step_hamiltonian(n_sites: int, wall_site: int, J_A: float, J_B: float) -> np.ndarray:
    """Open chain with rate J_A on bonds left of `wall_site` and J_B from it onwards."""
    rates = np.where(np.arange(n_sites - 1) < wall_site, J_A, J_B)
    return -(np.diag(rates, 1) + np.diag(rates, -1))


def wave_packet_transmission(
    k0: float,
    alpha: float,
    n_sites: int = 400,
    width: float = 20.0,
    J_A: float = 1.0,
) -> float:
    """Fraction of a Gaussian packet found beyond the wall after one scattering event.

    The packet starts centred in the left half and is propagated exactly through
    the eigendecomposition of the step Hamiltonian.
    """
    if not 0.0 < k0 < math.pi:
        raise KinematicsDomainError(f"packet momentum must lie in (0, pi), got {k0}")
    _check_ratio(alpha)

    wall_site = n_sites // 2
    x0 = wall_site // 2
    sites = np.arange(n_sites)
    psi = np.exp(-((sites - x0) ** 2) / (4.0 * width ** 2) + 1j * k0 * sites)
    psi /= np.linalg.norm(psi)

    H = step_hamiltonian(n_sites, wall_site, J_A, alpha * J_A)
    energies, vectors = linalg.eigh(H)

    velocity = group_velocity(J_A, k0)
    t = (wall_site - x0 + 4.0 * width) / velocity
    coefficients = vectors.conj().T @ psi
    psi_t = vectors @ (np.exp(-1j * energies * t) * coefficients)

    transmitted = float(np.sum(np.abs(psi_t[wall_site + 1:]) ** 2))
    logger.debug(f"Wave packet k0={k0:.4f} alpha={alpha}: transmitted {transmitted:.5f} at t={t:.2f}")
    return transmitted
