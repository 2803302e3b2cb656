"""Multi-stage zooming: solve on a coarse banded dictionary, keep the active
cells, split them, and repeat.

Cells are M-D boxes stored as ``(n, M)`` arrays of lower and upper edges.
Splitting divides each axis of a box into ``B`` equal children whose outer
edges are the parent's own edges, so grids never drift between stages.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .costs import admm_cost
from .dictionary import (
    DPSS,
    KINDS,
    NARROWBAND,
    WIDEBAND,
    BandGrid,
    Dictionary,
    DpssConfig,
    SamplingScheme,
    build_dictionary,
    concat_dictionaries,
)
from .numerics import MAX_ELEMENTS, NumericsError
from .solve import (
    EPS_ACT,
    LassoConfig,
    SolveResult,
    SpiceConfig,
    active_indices,
    estimate_amplitudes,
    lambda_max,
    lasso_admm,
    spice,
)

# Band-gain ratio fit: (-0.49 B^2 + 90 B + 5546 - 4 N) / 1e4
RATIO_COEFFS = (Fraction("-0.49"), Fraction(90), Fraction(5546), Fraction(-4))
RATIO_FIT_B = (4, 100)
RATIO_FIT_N = (50, 500)
SINGLE_STAGE_THRESHOLD = 0.81
MULTI_STAGE_THRESHOLD = 0.66


class ExtrapolationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class StageSpec:
    bands: int
    kind: str = WIDEBAND
    alpha: float = 0.3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown stage kind {self.kind!r}")
        if self.bands < 1 or (self.kind != NARROWBAND and self.bands < 2):
            raise ValueError("wideband stages need at least 2 bands")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class ZoomPlan:
    stages: tuple
    solver: str = "lasso"
    rho: float = 1.0
    max_iters: int = 5000
    tol: float | None = None
    spice: SpiceConfig = field(default_factory=SpiceConfig)
    eps_act: float = EPS_ACT
    dpss_w: float = 1 / 2.1
    final_solve: bool = False
    max_elements: int = MAX_ELEMENTS

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise ValueError("a plan needs at least one stage")
        if self.solver not in ("lasso", "spice"):
            raise ValueError(f"unknown solver {self.solver!r}")
        object.__setattr__(self, "stages", stages)

    @classmethod
    def simple(cls, bands: Sequence[int], kind: str = WIDEBAND, alpha=0.3, **kw) -> "ZoomPlan":
        alphas = list(alpha) if isinstance(alpha, (list, tuple)) else [alpha]
        alphas += [alphas[-1]] * (len(bands) - len(alphas))
        kinds = list(kind) if isinstance(kind, (list, tuple)) else [kind] * len(bands)
        return cls(tuple(StageSpec(b, k, a) for b, k, a in zip(bands, kinds, alphas)), **kw)

    def lasso_config(self, lam: float) -> LassoConfig:
        return LassoConfig(lam, rho=self.rho, max_iters=self.max_iters,
                           tol_primal=self.tol, tol_dual=self.tol, eps_act=self.eps_act)

    def resolution(self) -> float:
        """Width of a final-stage cell along one axis."""
        return 1.0 / float(np.prod([s.bands for s in self.stages]))


@dataclass
class StageTrace:
    n_columns: int
    lam: float | None
    lo: np.ndarray
    hi: np.ndarray
    magnitudes: np.ndarray
    n_clusters: int
    ops: int
    solve: dict

    def as_dict(self) -> dict:
        return {
            "n_columns": self.n_columns,
            "lambda": self.lam,
            "surviving_lo": self.lo.tolist(),
            "surviving_hi": self.hi.tolist(),
            "magnitudes": self.magnitudes.tolist(),
            "n_clusters": self.n_clusters,
            "ops": self.ops,
            "solve": self.solve,
        }


@dataclass
class ZoomResult:
    frequencies: np.ndarray
    amplitudes: np.ndarray
    stages: list
    op_count: int
    resolution: float

    @property
    def model_order(self) -> int:
        return int(self.frequencies.shape[0])

    @property
    def final_lo(self) -> np.ndarray:
        return self.stages[-1].lo if self.stages else np.empty((0, 1))

    @property
    def final_hi(self) -> np.ndarray:
        return self.stages[-1].hi if self.stages else np.empty((0, 1))

    def as_dict(self) -> dict:
        return {
            "model_order": self.model_order,
            "frequencies": self.frequencies.tolist(),
            "amplitudes_re": self.amplitudes.real.tolist(),
            "amplitudes_im": self.amplitudes.imag.tolist(),
            "op_count": self.op_count,
            "resolution": self.resolution,
            "stages": [s.as_dict() for s in self.stages],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1)


def band_ratio(B: int, N: int) -> float:
    """Fitted min/max gain ratio of a wideband atom with B bands and N samples.

    Evaluated in exact rational arithmetic. Warns with
    :class:`ExtrapolationWarning` outside the fitted range.
    """
    if B < 2 or N < 1:
        raise ValueError("need B >= 2 and N >= 1")
    if not (RATIO_FIT_B[0] <= B <= RATIO_FIT_B[1] and RATIO_FIT_N[0] <= N <= RATIO_FIT_N[1]):
        warnings.warn(f"band_ratio({B}, {N}) is outside the fitted range", ExtrapolationWarning,
                      stacklevel=2)
    a, b, c, d = RATIO_COEFFS
    return float((a * B * B + b * B + c + d * N) / 10_000)


def ratio_threshold(stages: int) -> float:
    return SINGLE_STAGE_THRESHOLD if stages <= 1 else MULTI_STAGE_THRESHOLD


def feasible_bands(N: int, stages: int) -> list[int]:
    thr = ratio_threshold(stages)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        return [B for B in range(RATIO_FIT_B[0], RATIO_FIT_B[1] + 1) if band_ratio(B, N) > thr]


def recommend_bands(N: int, stages: int, which: str = "largest") -> int:
    """Band count in [4, 100] whose fitted ratio clears the stage threshold.

    ``which="largest"`` returns the upper end of the feasible interval,
    ``"smallest"`` the cheapest qualifying dictionary. Raises
    ``ValueError`` when nothing qualifies; callers usually fall back to 4.
    """
    if stages < 1 or N < 1:
        raise ValueError("need stages >= 1 and N >= 1")
    ok = feasible_bands(N, stages)
    if not ok:
        raise ValueError(f"no band count in {RATIO_FIT_B} meets the threshold for N={N}")
    if which == "smallest":
        return ok[0]
    if which == "largest":
        return ok[-1]
    raise ValueError(f"which must be 'smallest' or 'largest', got {which!r}")


def select_active_bands(result: SolveResult, grid, eps_act: float = EPS_ACT) -> np.ndarray:
    """Indices of cells whose coefficient exceeds ``eps_act`` times the peak."""
    n = len(grid) if not isinstance(grid, Dictionary) else grid.n_columns
    if result.coefficients.shape[0] != n:
        raise ValueError("result and grid sizes differ")
    return active_indices(result.coefficients, eps_act)


def split_bands(bands, B_next: int, narrowband: bool = False) -> BandGrid:
    """Split each ``(lo, hi)`` band (or every cell of a BandGrid) into
    ``B_next`` equal children sharing the parent's edges."""
    if B_next < 2:
        raise ValueError("B_next must be at least 2")
    if isinstance(bands, BandGrid):
        pairs = list(zip(bands.lo, bands.hi))
    else:
        pairs = [tuple(b) for b in bands]
    pairs.sort()
    lo_out, hi_out = [], []
    for lo, hi in pairs:
        child = BandGrid.uniform(B_next, lo, hi)
        lo_out.extend(child.lo)
        hi_out.extend(child.hi)
    return BandGrid(np.array(lo_out), np.array(hi_out), narrowband)


def _stage_grids(lo: np.ndarray, hi: np.ndarray, stage: StageSpec) -> list[BandGrid]:
    grids = []
    for a, b in zip(lo, hi):
        if stage.kind == NARROWBAND and a == 0.0 and b == 1.0:
            grids.append(BandGrid.points(stage.bands))
        else:
            grids.append(BandGrid.uniform(stage.bands, a, b, narrowband=stage.kind == NARROWBAND))
    return grids


def build_stage_dictionary(
    scheme: SamplingScheme,
    parents_lo: np.ndarray,
    parents_hi: np.ndarray,
    stage: StageSpec,
    dpss_w: float = 1 / 2.1,
    max_elements: int = MAX_ELEMENTS,
) -> Dictionary:
    """Children of every parent cell, one Kronecker block per parent."""
    dpss = DpssConfig(scheme.shape[0], dpss_w) if stage.kind == DPSS else None
    n_cols = parents_lo.shape[0] * stage.bands ** scheme.dims
    if n_cols * scheme.n_samples > max_elements:
        raise NumericsError(
            f"stage dictionary of {n_cols} columns x {scheme.n_samples} rows exceeds limit"
        )
    parts = [
        build_dictionary(scheme, _stage_grids(lo, hi, stage), stage.kind, dpss, max_elements)
        for lo, hi in zip(parents_lo, parents_hi)
    ]
    return concat_dictionaries(parts)


def _torus_delta(a, b):
    """Signed difference ``a - b`` wrapped into ``[-1/2, 1/2)``."""
    return (np.asarray(a) - np.asarray(b) + 0.5) % 1.0 - 0.5


def cluster_cells(lo: np.ndarray, hi: np.ndarray) -> list[np.ndarray]:
    """Group cells that touch (faces, edges or corners) on the torus."""
    n = lo.shape[0]
    if n == 0:
        return []
    centers = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        gap = np.abs(_torus_delta(centers[i + 1:], centers[i])) - half[i + 1:] - half[i]
        tol = 1e-9 * np.maximum(half[i], half[i + 1:])
        touching = np.all(gap <= tol, axis=1)
        for j in np.flatnonzero(touching) + i + 1:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [np.array(g) for g in groups.values()]


def cluster_midpoint(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Midpoint of the bounding box of a cell group, per axis, modulo 1."""
    ref = 0.5 * (lo[0] + hi[0])
    shift = _torus_delta(0.5 * (lo + hi), ref) - (0.5 * (lo + hi) - ref)
    lo_u, hi_u = lo + shift, hi + shift
    return (0.5 * (lo_u.min(axis=0) + hi_u.max(axis=0))) % 1.0


def _solve(plan: ZoomPlan, stage: StageSpec, D: Dictionary, y: np.ndarray):
    if plan.solver == "spice":
        return None, spice(D, y, plan.spice)
    lam = stage.alpha * lambda_max(D, y)
    return lam, lasso_admm(D, y, plan.lasso_config(lam))


def run_zoom(y, scheme: SamplingScheme, plan: ZoomPlan) -> ZoomResult:
    """Coarse-to-fine sparse estimation of the frequencies in ``y``."""
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim > 1:
        if y.shape != scheme.shape:
            raise ValueError(f"data shape {y.shape} does not match scheme {scheme.shape}")
        y = y.ravel(order="F")
    if y.size != scheme.n_samples:
        raise ValueError(f"data has {y.size} samples, scheme has {scheme.n_samples}")

    M = scheme.dims
    N = scheme.n_samples
    lo = np.zeros((1, M))
    hi = np.ones((1, M))
    traces: list[StageTrace] = []
    ops = 0
    for stage in plan.stages:
        D = build_stage_dictionary(scheme, lo, hi, stage, plan.dpss_w, plan.max_elements)
        lam, res = _solve(plan, stage, D, y)
        cost = admm_cost(N, D.n_columns)
        ops += cost
        active = active_indices(res.coefficients, plan.eps_act)
        lo, hi = D.lo[active], D.hi[active]
        traces.append(StageTrace(
            n_columns=D.n_columns,
            lam=lam,
            lo=lo,
            hi=hi,
            magnitudes=np.abs(res.coefficients[active]),
            n_clusters=len(cluster_cells(lo, hi)),
            ops=cost,
            solve=res.summary(),
        ))
        if active.size == 0:
            break

    freqs = np.array([cluster_midpoint(lo[g], hi[g]) for g in cluster_cells(lo, hi)])
    freqs = freqs.reshape(-1, M)
    if plan.final_solve and freqs.shape[0]:
        freqs = _final_narrowband(y, scheme, freqs, plan)
    amps = _amplitudes(y, scheme, freqs)
    return ZoomResult(freqs, amps, traces, ops, plan.resolution())


def narrowband_at(scheme: SamplingScheme, freqs: np.ndarray) -> Dictionary:
    """Normalised narrowband atoms at arbitrary M-D frequency points."""
    cols = []
    for f in freqs:
        atom = np.ones(1, dtype=np.complex128)
        for m, t in enumerate(scheme.times):
            atom = np.kron(np.exp(2j * np.pi * f[m] * t), atom)
        cols.append(atom)
    matrix = np.stack(cols, axis=1)
    norms = np.linalg.norm(matrix, axis=0)
    return Dictionary(matrix / norms, freqs.copy(), freqs.copy(), norms, NARROWBAND)


def _final_narrowband(y, scheme, freqs, plan: ZoomPlan):
    D = narrowband_at(scheme, freqs)
    lam = plan.stages[-1].alpha * lambda_max(D, y)
    res = lasso_admm(D, y, plan.lasso_config(lam))
    return freqs[active_indices(res.coefficients, plan.eps_act)]


def _amplitudes(y, scheme, freqs) -> np.ndarray:
    if freqs.shape[0] == 0:
        return np.empty(0, dtype=np.complex128)
    try:
        return estimate_amplitudes(narrowband_at(scheme, freqs), y, np.arange(freqs.shape[0]))
    except NumericsError:
        return np.full(freqs.shape[0], np.nan + 0j)
