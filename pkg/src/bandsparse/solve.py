"""Sparse solvers over a fixed dictionary: complex LASSO by ADMM and SPICE."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Dictionary
from .numerics import HpdFactor, NumericsError

log = logging.getLogger(__name__)

EPS_ACT = 1e-3


@dataclass(frozen=True)
class LassoConfig:
    """ADMM settings. ``None`` tolerances resolve to ``1e-8 * sqrt(P)``."""

    lam: float
    rho: float = 1.0
    max_iters: int = 5000
    tol_primal: float | None = None
    tol_dual: float | None = None
    eps_act: float = EPS_ACT

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        for tol in (self.tol_primal, self.tol_dual):
            if tol is not None and tol <= 0:
                raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class SpiceConfig:
    max_iters: int = 2000
    tol: float = 1e-7
    eps_act: float = EPS_ACT
    noise_floor: float = 1e-12
    check_monotone: bool = False

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class SolveResult:
    coefficients: np.ndarray
    active_set: np.ndarray
    iterations: int
    objective: float
    converged: bool
    history: np.ndarray = field(default_factory=lambda: np.empty(0))
    noise: np.ndarray | None = None

    def summary(self) -> dict:
        return {
            "active_set": self.active_set.tolist(),
            "active_magnitudes": np.abs(self.coefficients[self.active_set]).tolist(),
            "iterations": self.iterations,
            "objective": self.objective,
            "converged": self.converged,
        }


def _matrix(d) -> np.ndarray:
    return d.matrix if isinstance(d, Dictionary) else np.asarray(d, dtype=np.complex128)


def _check(A: np.ndarray, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    if A.shape[0] != y.size:
        raise NumericsError(f"dictionary has {A.shape[0]} rows but data has {y.size} samples")
    if not np.all(np.isfinite(y)):
        raise NumericsError("data has non-finite entries")
    return y


def soft_threshold(v, kappa: float) -> np.ndarray:
    """Shrink each magnitude by ``kappa`` (clamping at zero), keeping the phase."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    v = np.asarray(v, dtype=np.complex128)
    mag = np.abs(v)
    shrunk = np.maximum(mag - kappa, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(shrunk > 0, shrunk / (shrunk + kappa), 0.0)
    return scale * v


def active_indices(coefficients, eps_act: float = EPS_ACT) -> np.ndarray:
    mags = np.abs(np.asarray(coefficients))
    peak = mags.max(initial=0.0)
    if peak == 0:
        return np.empty(0, dtype=int)
    return np.flatnonzero(mags > eps_act * peak)


def lambda_max(d, y) -> float:
    """Smallest lambda for which the LASSO solution is identically zero."""
    A = _matrix(d)
    y = _check(A, y)
    return float(np.abs(A.conj().T @ y).max(initial=0.0))


def lambda_heuristic(d, y, alpha: float) -> float:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha * lambda_max(d, y)


def lasso_objective(A, y, z, lam: float) -> float:
    r = y - A @ z
    return float(0.5 * np.vdot(r, r).real + lam * np.abs(z).sum())


class XStep:
    """Pre-factorised solver for ``(A^H A + rho I) x = b``.

    With ``P <= N`` the P x P Gram system is inverted once. Otherwise the
    Woodbury identity ``(I - A^H (rho I + A A^H)^{-1} A) / rho`` needs only
    an N x N inverse. Both inverses come from a Cholesky factor, so a
    non-HPD system raises :class:`NumericsError`.

    On the Woodbury path the P x P operator is formed explicitly when
    applying it (``P^2``) is cheaper than the factored form (``2NP + N^2``).
    """

    def __init__(self, A: np.ndarray, rho: float, woodbury: bool | None = None):
        self.A = A
        self.rho = rho
        N, P = A.shape
        self.woodbury = P > N if woodbury is None else woodbury
        if self.woodbury:
            self.Ah = A.conj().T
            G = A @ self.Ah + rho * np.eye(N)
        else:
            G = A.conj().T @ A + rho * np.eye(P)
        self.inverse = HpdFactor(G).solve(np.eye(G.shape[0], dtype=np.complex128))
        self.operator = None
        if not self.woodbury:
            self.operator = self.inverse
        elif P * P < 2 * N * P + N * N:
            self.operator = (np.eye(P) - self.Ah @ (self.inverse @ A)) / rho

    def __call__(self, b: np.ndarray) -> np.ndarray:
        if self.operator is not None:
            return self.operator @ b
        return (b - self.Ah @ (self.inverse @ (self.A @ b))) / self.rho


def lasso_admm(d, y, cfg: LassoConfig) -> SolveResult:
    """Minimise ``0.5 ||y - A b||^2 + lam ||b||_1`` by scaled-form ADMM."""
    A = _matrix(d)
    y = _check(A, y)
    N, P = A.shape
    rho, kappa = cfg.rho, cfg.lam / cfg.rho
    tol_p = cfg.tol_primal if cfg.tol_primal is not None else 1e-8 * np.sqrt(P)
    tol_d = cfg.tol_dual if cfg.tol_dual is not None else 1e-8 * np.sqrt(P)

    xstep = XStep(A, rho)
    Ahy = A.conj().T @ y
    z = np.zeros(P, dtype=np.complex128)
    u = np.zeros(P, dtype=np.complex128)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        x = xstep(Ahy + rho * (z - u))
        z_new = soft_threshold(x + u, kappa)
        u += x - z_new
        r_norm = np.linalg.norm(x - z_new)
        s_norm = rho * np.linalg.norm(z_new - z)
        z = z_new
        if r_norm <= tol_p and s_norm <= tol_d:
            converged = True
            break
    if not converged:
        log.debug("ADMM stopped at max_iters=%d without meeting tolerances", cfg.max_iters)
    if not np.all(np.isfinite(z)):
        raise NumericsError("ADMM produced non-finite iterates")
    return SolveResult(
        coefficients=z,
        active_set=active_indices(z, cfg.eps_act),
        iterations=it,
        objective=lasso_objective(A, y, z, cfg.lam),
        converged=converged,
    )


def spice_criterion(B: np.ndarray, y: np.ndarray, p: np.ndarray, sigma: np.ndarray) -> float:
    R = (B * p) @ B.conj().T + np.diag(sigma)
    return float(np.vdot(y, np.linalg.solve(R, y)).real + p.sum() + sigma.sum())


def spice(d, y, cfg: SpiceConfig = SpiceConfig()) -> SolveResult:
    """Single-snapshot SPICE with a per-sample noise power.

    Minimises ``y^H R^{-1} y + sum(p) + sum(sigma)`` with
    ``R = B diag(p) B^H + diag(sigma)`` by the cyclic updates
    ``p_k <- p_k |b_k^H R^{-1} y|`` and ``sigma_n <- sigma_n |(R^{-1} y)_n|``,
    each of which is an exact block minimisation of an augmented criterion,
    so the objective never increases. Columns must have unit norm.
    """
    B = _matrix(d)
    y = _check(B, y)
    N, P = B.shape
    energy = float(np.vdot(y, y).real)
    if energy == 0.0:
        return SolveResult(
            coefficients=np.zeros(P),
            active_set=np.empty(0, dtype=int),
            iterations=0,
            objective=0.0,
            converged=True,
            history=np.zeros(1),
            noise=np.zeros(N),
        )

    floor = cfg.noise_floor * energy / N
    p = np.abs(B.conj().T @ y) ** 2 / N
    sigma = np.full(N, energy / N)
    Bh = B.conj().T

    def solve_r(p, sigma):
        R = (B * p) @ Bh
        R[np.diag_indices(N)] += sigma
        try:
            return np.linalg.solve(R, y)
        except np.linalg.LinAlgError as exc:
            raise NumericsError(f"SPICE covariance is singular: {exc}") from exc

    w = solve_r(p, sigma)
    history = [float(np.vdot(y, w).real + p.sum() + sigma.sum())]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        p_new = p * np.abs(Bh @ w)
        sigma_new = np.maximum(sigma * np.abs(w), floor)
        change = np.sqrt(np.sum((p_new - p) ** 2) + np.sum((sigma_new - sigma) ** 2))
        scale = np.sqrt(np.sum(p**2) + np.sum(sigma**2))
        p, sigma = p_new, sigma_new
        w = solve_r(p, sigma)
        history.append(float(np.vdot(y, w).real + p.sum() + sigma.sum()))
        if cfg.check_monotone and history[-1] > history[-2] * (1 + 1e-10):
            raise AssertionError(
                f"SPICE criterion increased at iteration {it}: {history[-2]} -> {history[-1]}"
            )
        if change <= cfg.tol * scale:
            converged = True
            break

    return SolveResult(
        coefficients=p,
        active_set=active_indices(p, cfg.eps_act),
        iterations=it,
        objective=history[-1],
        converged=converged,
        history=np.asarray(history),
        noise=sigma,
    )


def estimate_amplitudes(dictionary: Dictionary, y, support) -> np.ndarray:
    """Least-squares amplitudes on ``support``, on the un-normalised atom scale."""
    support = np.asarray(support, dtype=int).reshape(-1)
    if support.size == 0:
        raise ValueError("support is empty")
    A = dictionary.matrix[:, support]
    y = _check(A, y)
    if support.size > A.shape[0]:
        raise NumericsError("support larger than the number of samples")
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < support.size:
        raise NumericsError("support columns are linearly dependent")
    return coef / dictionary.column_norms[support]
