"""Operation-count model for the ADMM x-step and the zoom budget."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence


def admm_cost(N: int, P: int) -> int:
    """Approximate x-step cost for an N x P dictionary.

    ``P^3 + (N+1) P^2 + N P`` for the direct Gram factorisation
    (``P <= N``), ``N^3 + 3 P N^2 + P N + P^2`` for the Woodbury branch.
    """
    if N < 1 or P < 1:
        raise ValueError("N and P must be positive")
    if P <= N:
        return P**3 + (N + 1) * P**2 + N * P
    return N**3 + 3 * P * N**2 + P * N + P**2


@dataclass(frozen=True)
class ZoomBudget:
    narrowband_cost: float
    first_stage_cost: float
    residual: float
    stage_cost: float
    zoom_cost: float
    fraction: float
    grid: float
    narrowband_grid: float
    respected: bool

    def as_dict(self) -> dict:
        return asdict(self)


def zoom_budget(P: int, N: int, K: int, eta: float, I_z: int) -> ZoomBudget:
    """Compare an N-band first stage plus ``I_z`` zoom stages of ``eta*N``
    bands per component against one narrowband solve with ``P`` atoms."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    c1 = N**3 + 3 * P * N**2 + P**2 + P * N
    c2 = 2 * (N**3 + N**2)
    residual = c1 - c2
    bands = eta * N
    stage = bands**3 + (N + 1) * bands**2 + eta * N**2
    used = K * I_z * stage
    return ZoomBudget(
        narrowband_cost=float(c1),
        first_stage_cost=float(c2),
        residual=float(residual),
        stage_cost=float(stage),
        zoom_cost=float(used),
        fraction=float((c2 + used) / c1),
        grid=float((1.0 / N) * bands ** (-I_z)),
        narrowband_grid=1.0 / P,
        respected=bool(used <= residual),
    )


def stage_columns(bands: Sequence[int], K: int, dims: int = 1) -> list[int]:
    """Dictionary width per stage when ``K`` cells survive each stage."""
    return [bands[0] ** dims] + [K * b**dims for b in bands[1:]]


def pipeline_cost(N: int, bands: Sequence[int], K: int, dims: int = 1) -> int:
    return sum(admm_cost(N, p) for p in stage_columns(bands, K, dims))


def relative_complexity(P: int, N: int, K: int, bands: Sequence[int]) -> float:
    """Modeled cost of a zoom pipeline relative to one narrowband solve."""
    return pipeline_cost(N, bands, K) / admm_cost(N, P)
