"""Narrowband, integrated-wideband and DPSS dictionaries over M-D grids.

Column and row ordering follow the vectorised tensor convention: the first
dimension varies fastest, so an M-D dictionary is
``D[M-1] kron ... kron D[0]`` and a data tensor ``Y`` maps to
``Y.ravel(order="F")``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .numerics import MAX_ELEMENTS, NumericsError, kronecker

NARROWBAND = "narrowband"
WIDEBAND = "wideband"
DPSS = "dpss"
KINDS = (NARROWBAND, WIDEBAND, DPSS)


@dataclass(frozen=True)
class SamplingScheme:
    """Sample instants for each dimension (frequencies in cycles per unit time)."""

    times: tuple

    def __post_init__(self):
        cleaned = []
        for t in self.times:
            t = np.asarray(t, dtype=float).reshape(-1)
            if t.size == 0:
                raise ValueError("every dimension needs at least one sample")
            if not np.all(np.isfinite(t)):
                raise ValueError("sample times must be finite")
            if t.size > 1 and np.any(np.diff(t) <= 0):
                raise ValueError("sample times must be strictly increasing")
            t.setflags(write=False)
            cleaned.append(t)
        if not cleaned:
            raise ValueError("a sampling scheme needs at least one dimension")
        object.__setattr__(self, "times", tuple(cleaned))

    @classmethod
    def uniform(cls, *sizes: int, start: float = 0.0) -> "SamplingScheme":
        return cls(tuple(start + np.arange(n, dtype=float) for n in sizes))

    @property
    def dims(self) -> int:
        return len(self.times)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(t.size for t in self.times)

    @property
    def n_samples(self) -> int:
        return int(np.prod(self.shape))

    @property
    def is_uniform(self) -> bool:
        return all(
            np.all(t == np.round(t)) and (t.size == 1 or np.all(np.diff(t) == 1.0))
            for t in self.times
        )


@dataclass(frozen=True)
class BandGrid:
    """Ordered, non-overlapping frequency cells for one dimension.

    Wideband atoms integrate over ``[lo, hi]``; narrowband atoms sit at the
    cell midpoint. Cells live on the unit torus, so a narrowband cell
    centred on 0 may start slightly below 0.
    """

    lo: np.ndarray
    hi: np.ndarray
    narrowband: bool = False

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("lo and hi must be non-empty and of equal length")
        if np.any(hi <= lo):
            raise ValueError("every cell must have positive width")
        if np.any(lo[1:] < hi[:-1]):
            raise ValueError("cells must be sorted and non-overlapping")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def uniform(cls, n: int, lo: float = 0.0, hi: float = 1.0, narrowband: bool = False):
        """Partition ``[lo, hi]`` into ``n`` equal cells sharing exact edges."""
        if n < 1:
            raise ValueError("need at least one cell")
        edges = lo + (hi - lo) * np.arange(n + 1) / n
        edges[0], edges[-1] = lo, hi
        return cls(edges[:-1], edges[1:], narrowband)

    @classmethod
    def from_edges(cls, edges, narrowband: bool = False):
        edges = np.asarray(edges, dtype=float)
        return cls(edges[:-1], edges[1:], narrowband)

    @classmethod
    def points(cls, n: int) -> "BandGrid":
        """Narrowband grid at ``p / n`` for ``p = 0..n-1``."""
        return cls.from_edges((np.arange(n + 1) - 0.5) / n, narrowband=True)

    def __len__(self) -> int:
        return self.lo.size

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def as_narrowband(self, narrowband: bool = True) -> "BandGrid":
        return BandGrid(self.lo, self.hi, narrowband)

    def edges(self) -> np.ndarray:
        """Sorted distinct cell edges; shared edges appear once."""
        return np.unique(np.concatenate([self.lo, self.hi]))


@dataclass(frozen=True)
class DpssConfig:
    """Slepian sequence parameters: length ``Q`` and half-bandwidth ``W``."""

    Q: int
    W: float

    def __post_init__(self):
        if self.Q < 2:
            raise ValueError("Q must be at least 2")
        if not 0.0 < self.W < 0.5:
            raise ValueError("W must lie in (0, 1/2)")


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Unit-norm atoms plus per-column cell metadata.

    ``lo`` and ``hi`` have shape ``(n_columns, dims)``; column ``j`` covers
    ``[lo[j, m], hi[j, m]]`` in dimension ``m``.
    """

    matrix: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    column_norms: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def dims(self) -> int:
        return self.lo.shape[1]

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def to_records(self) -> list[dict]:
        rows = []
        for j in range(self.n_columns):
            rec = {"column": j, "kind": self.kind, "norm": float(self.column_norms[j])}
            for m in range(self.dims):
                rec[f"lo{m}"] = float(self.lo[j, m])
                rec[f"hi{m}"] = float(self.hi[j, m])
            rows.append(rec)
        return rows

    def to_json(self, include_matrix: bool = False) -> str:
        """Debug dump; the layout is not a stable interchange format."""
        out = {
            "kind": self.kind,
            "shape": list(self.matrix.shape),
            "columns": self.to_records(),
        }
        if include_matrix:
            out["matrix_re"] = self.matrix.real.tolist()
            out["matrix_im"] = self.matrix.imag.tolist()
        return json.dumps(out, indent=1)

    def to_csv(self) -> str:
        records = self.to_records()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(records[0]))
        writer.writeheader()
        writer.writerows(records)
        return buf.getvalue()


def narrowband_atom(f: float, times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if np.any(np.isnan(t)):
        raise ValueError("sample times contain NaN")
    return np.exp(2j * np.pi * f * t)


def wideband_atom(f_lo: float, f_hi: float, times) -> np.ndarray:
    """Integral of ``exp(2 i pi f t)`` over ``f`` in ``[f_lo, f_hi]``.

    Evaluated as ``exp(i pi (f_lo + f_hi) t) * sin(pi w t) / (pi t)`` with
    ``w = f_hi - f_lo``; this is algebraically the usual
    ``(e^{2 i pi f_hi t} - e^{2 i pi f_lo t}) / (2 i pi t)`` but has no
    cancellation near ``t = 0`` and gives the limit ``w`` there.
    """
    if not f_hi > f_lo:
        raise ValueError(f"empty band [{f_lo}, {f_hi}]")
    t = np.asarray(times, dtype=float)
    w = f_hi - f_lo
    return np.exp(1j * np.pi * (f_lo + f_hi) * t) * (w * np.sinc(w * t))


def slepian(Q: int, W: float) -> np.ndarray:
    """First (most concentrated) discrete prolate spheroidal sequence.

    Top eigenvector of the symmetric tridiagonal matrix that commutes with
    the time/band limiting operator. Sign fixed so the sequence sums
    positive.
    """
    n = np.arange(Q)
    diag = ((Q - 1 - 2 * n) / 2.0) ** 2 * np.cos(2 * np.pi * W)
    off = n[1:] * (Q - n[1:]) / 2.0
    _, vec = eigh_tridiagonal(diag, off, select="i", select_range=(Q - 1, Q - 1))
    v = vec[:, 0]
    if v.sum() < 0:
        v = -v
    return v


def dpss_atom(band_center: float, cfg: DpssConfig, times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if not (np.all(t == np.round(t)) and (t.size == 1 or np.all(np.diff(t) == 1.0))):
        raise ValueError("DPSS atoms need uniform integer sampling")
    if t.size != cfg.Q:
        raise ValueError(f"DPSS length Q={cfg.Q} does not match {t.size} samples")
    return slepian(cfg.Q, cfg.W) * np.exp(2j * np.pi * band_center * t)


def atom_matrix(grid: BandGrid, times, kind: str, dpss: DpssConfig | None = None) -> np.ndarray:
    """Un-normalised atoms of one dimension, one column per cell."""
    t = np.asarray(times, dtype=float)
    if kind == NARROWBAND:
        return np.exp(2j * np.pi * np.outer(t, grid.centers))
    if kind == WIDEBAND:
        w = grid.widths
        return np.exp(1j * np.pi * np.outer(t, grid.lo + grid.hi)) * (w * np.sinc(np.outer(t, w)))
    if kind == DPSS:
        # W is relative to each cell's width: the taper's passband is 2 W times the cell.
        if dpss is None:
            dpss = DpssConfig(t.size, 1 / 2.1)
        if dpss.Q != t.size:
            raise ValueError(f"DPSS length Q={dpss.Q} does not match {t.size} samples")
        cols = [
            dpss_atom(c, DpssConfig(dpss.Q, dpss.W * wd), t)
            for c, wd in zip(grid.centers, grid.widths)
        ]
        return np.stack(cols, axis=1)
    raise ValueError(f"unknown dictionary kind {kind!r}")


def _normalize(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(matrix, axis=0)
    if np.any(norms <= 0):
        raise NumericsError("dictionary has a zero column")
    return matrix / norms, norms


def build_dictionary(
    scheme: SamplingScheme,
    grids: Sequence[BandGrid] | BandGrid,
    kind: str = WIDEBAND,
    dpss: DpssConfig | None = None,
    max_elements: int = MAX_ELEMENTS,
) -> Dictionary:
    """Kronecker-assembled, column-normalised dictionary over a product grid."""
    if isinstance(grids, BandGrid):
        grids = (grids,)
    if len(grids) != scheme.dims:
        raise ValueError(f"{len(grids)} grids for a {scheme.dims}-D sampling scheme")
    if kind not in KINDS:
        raise ValueError(f"unknown dictionary kind {kind!r}")
    total = scheme.n_samples * int(np.prod([len(g) for g in grids]))
    if total > max_elements:
        raise NumericsError(f"dictionary of {total} entries exceeds limit {max_elements}")

    mats = [atom_matrix(g, t, kind, dpss) for g, t in zip(grids, scheme.times)]
    matrix = mats[0]
    for m in mats[1:]:
        matrix = kronecker(m, matrix, max_elements)
    matrix, norms = _normalize(matrix)

    # first dimension fastest, matching the Kronecker column order
    idx = np.indices([len(g) for g in grids]).reshape(len(grids), -1, order="F")
    lo = np.stack([g.lo[i] for g, i in zip(grids, idx)], axis=1)
    hi = np.stack([g.hi[i] for g, i in zip(grids, idx)], axis=1)
    return Dictionary(matrix, lo, hi, norms, kind)


def concat_dictionaries(parts: Sequence[Dictionary]) -> Dictionary:
    if not parts:
        raise ValueError("nothing to concatenate")
    return Dictionary(
        np.hstack([p.matrix for p in parts]),
        np.vstack([p.lo for p in parts]),
        np.vstack([p.hi for p in parts]),
        np.concatenate([p.column_norms for p in parts]),
        parts[0].kind,
    )


def inner_product_scan(dictionary: Dictionary, y, normalize: bool = False) -> np.ndarray:
    """``|d_i^H y|`` for every column, optionally scaled to a unit maximum."""
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    if y.size != dictionary.n_rows:
        raise ValueError(f"data length {y.size} does not match {dictionary.n_rows} rows")
    mags = np.abs(dictionary.matrix.conj().T @ y)
    if normalize:
        peak = mags.max(initial=0.0)
        if peak > 0:
            mags = mags / peak
    return mags
