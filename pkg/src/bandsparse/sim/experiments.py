"""Seeded Monte Carlo experiments and their reports.

Every trial derives its random stream from ``(seed, setting, trial)`` only,
so results do not depend on execution order or on the number of workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..costs import relative_complexity
from ..dictionary import (
    DPSS,
    NARROWBAND,
    WIDEBAND,
    BandGrid,
    SamplingScheme,
    build_dictionary,
    inner_product_scan,
)
from ..solve import SpiceConfig
from ..zoom import ZoomPlan, run_zoom
from .metrics import MetricsConfig, mse, support_recovered
from .signals import (
    SignalSpec,
    add_noise,
    generate_signal,
    nonuniform_scheme,
    random_signal,
    torus_distance,
)

NOISE_FREE = math.inf


def trial_rng(seed: int, setting: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(setting, trial)))


@dataclass
class ExperimentReport:
    name: str
    seed: int
    trials: int
    params: dict
    stats: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    plot: list = field(default_factory=list)
    wall_time: float = 0.0

    def stat(self, **match) -> dict:
        """The single aggregate row whose fields equal ``match``."""
        hits = [s for s in self.stats if all(s.get(k) == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} stats rows match {match}")
        return hits[0]

    def as_dict(self, timing: bool = True) -> dict:
        rows = self.rows
        stats = self.stats
        if not timing:
            rows = [{k: v for k, v in r.items() if k != "time"} for r in rows]
            stats = [{k: v for k, v in s.items() if k != "mean_time"} for s in stats]
        out = {
            "name": self.name,
            "seed": self.seed,
            "trials": self.trials,
            "params": self.params,
            "stats": stats,
            "rows": rows,
            "plot": self.plot,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(_jsonable(self.as_dict(timing)), indent=1, allow_nan=True)

    def rows_csv(self) -> str:
        return _csv(self.rows)

    def stats_csv(self) -> str:
        return _csv(self.stats)

    def plot_csv(self) -> str:
        return _csv(self.plot, ["x", "y", "series"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _csv(records: list, fields: list | None = None) -> str:
    buf = io.StringIO()
    if not records:
        return ""
    if fields is None:
        fields = []
        for r in records:
            fields.extend(k for k in r if k not in fields)
    writer = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore")
    writer.writeheader()
    for r in records:
        writer.writerow({k: _cell(r.get(k)) for k in fields})
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return json.dumps(_jsonable(v))
    return v


# --- single-trial evaluation ------------------------------------------------


def evaluate(truth: SignalSpec, result, resolution: float, outlier_factor: float = 2.0) -> dict:
    """Compare one zoom result with the ground truth."""
    k_hat = result.model_order
    row = {
        "k_hat": k_hat,
        "correct": k_hat == truth.K,
        "support": support_recovered(truth.frequencies, result.final_lo, result.final_hi),
        "ops": result.op_count,
        "mse": math.nan,
        "outliers": 0,
        "errors": [],
    }
    if k_hat == truth.K and k_hat > 0:
        m = mse(truth.frequencies, result.frequencies, MetricsConfig(resolution, outlier_factor))
        row.update(mse=m.mse, outliers=m.outliers, errors=m.errors.tolist())
    return row


@dataclass(frozen=True)
class Setting:
    """One x-axis point of an experiment: a label and the trial recipe."""

    label: dict
    make_data: Callable
    methods: dict
    resolutions: dict


def _run_trial(args) -> list[dict]:
    setting_idx, trial, seed, setting = args
    rng = trial_rng(seed, setting_idx, trial)
    truth, y, scheme = setting.make_data(rng)
    rows = []
    for name, plan in setting.methods.items():
        t0 = time.perf_counter()
        res = run_zoom(y, scheme, plan)
        elapsed = time.perf_counter() - t0
        row = {**setting.label, "method": name, "trial": trial}
        row.update(evaluate(truth, res, setting.resolutions[name]))
        row["time"] = elapsed
        rows.append(row)
    return rows


def _map(fn, tasks: list, jobs: int) -> list:
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def aggregate(rows: list, keys: list) -> list:
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    stats = []
    for key, rs in groups.items():
        n = len(rs)
        correct = [r for r in rs if r["correct"]]
        mses = [r["mse"] for r in correct if not math.isnan(r["mse"])]
        k_true = rs[0].get("k_true")
        stats.append({
            **dict(zip(keys, key)),
            "trials": n,
            "correct_rate": len(correct) / n,
            "over_rate": sum(r["k_hat"] > r["k_true"] for r in rs) / n if k_true is not None else None,
            "under_rate": sum(r["k_hat"] < r["k_true"] for r in rs) / n if k_true is not None else None,
            "support_rate": sum(bool(r["support"]) for r in rs) / n,
            "mse": float(np.mean(mses)) if mses else math.nan,
            "mse_trials": len(mses),
            "outliers": int(sum(r["outliers"] for r in correct)),
            "mean_ops": float(np.mean([r["ops"] for r in rs])),
            "mean_time": float(np.mean([r["time"] for r in rs])),
        })
    return stats


def monte_carlo(name: str, settings: list, trials: int, seed: int, params: dict,
                x_key: str, y_key: str = "correct_rate", jobs: int = 1) -> ExperimentReport:
    t0 = time.perf_counter()
    tasks = [(s, i, seed, st) for s, st in enumerate(settings) for i in range(trials)]
    rows = [r for chunk in _map(_run_trial, tasks, jobs) for r in chunk]
    label_keys = list(settings[0].label) + ["method"]
    stats = aggregate(rows, label_keys)
    plot = [{"x": s[x_key], "y": s[y_key], "series": s["method"]} for s in stats]
    return ExperimentReport(name, seed, trials, params, stats, rows, plot,
                            time.perf_counter() - t0)


# --- data recipes (module-level so worker processes can pickle them) --------


@dataclass(frozen=True)
class UniformData:
    N: tuple
    K: int
    snr_db: float
    magnitudes: object = 1.0
    min_spacing: float | None = None

    def __call__(self, rng):
        scheme = SamplingScheme.uniform(*self.N)
        truth = random_signal(self.K, rng, len(self.N), self.magnitudes, self.min_spacing)
        y = generate_signal(truth, scheme)
        if not math.isinf(self.snr_db) and self.K > 0:
            y = add_noise(y, self.snr_db, rng)
        return truth, y, scheme


@dataclass(frozen=True)
class NonuniformData:
    N: int
    K: int
    snr_db: float

    def __call__(self, rng):
        scheme = nonuniform_scheme(self.N, rng)
        truth = random_signal(self.K, rng)
        y = add_noise(generate_signal(truth, scheme), self.snr_db, rng)
        return truth, y, scheme


def _mc(name, settings, trials, seed, params, x_key, K, jobs, y_key="correct_rate"):
    # the aggregation reads k_true from each row's label
    for st in settings:
        st.label["k_true"] = K
    return monte_carlo(name, settings, trials, seed, params, x_key, y_key, jobs)


# --- built-in experiments ---------------------------------------------------


def peak_variance_study(trials: int = 1000, snr_grid=(0, 5, 10, 15, 20), seed: int = 0,
                        N: int = 100, P: int = 50, magnitudes=(4.0, 5.0)) -> ExperimentReport:
    """Spread of the normalised inner-product peak of the weaker of two tones.

    For each SNR, scans narrowband (``P`` points) and wideband (``P``
    bands) dictionaries, normalises each scan to a unit maximum and records
    the value at the cell nearest the weaker tone.
    """
    t0 = time.perf_counter()
    scheme = SamplingScheme.uniform(N)
    dicts = {
        NARROWBAND: build_dictionary(scheme, BandGrid.points(P), NARROWBAND),
        WIDEBAND: build_dictionary(scheme, BandGrid.uniform(P), WIDEBAND),
    }
    weak = int(np.argmin(magnitudes))
    rows, stats, plot = [], [], []
    for s, snr in enumerate(snr_grid):
        values = {k: [] for k in dicts}
        for i in range(trials):
            rng = trial_rng(seed, s, i)
            truth = random_signal(2, rng, magnitudes=np.asarray(magnitudes), min_spacing=2 / N)
            y = generate_signal(truth, scheme)
            if not math.isinf(snr):
                y = add_noise(y, snr, rng)
            f = truth.frequencies[weak, 0]
            for kind, D in dicts.items():
                j = int(np.argmin(torus_distance(D.centers[:, 0], f)))
                v = float(inner_product_scan(D, y, normalize=True)[j])
                values[kind].append(v)
                rows.append({"snr_db": snr, "method": kind, "trial": i, "peak": v})
        for kind, v in values.items():
            std = float(np.std(v))
            stats.append({"snr_db": snr, "method": kind, "trials": trials, "std": std,
                          "mean": float(np.mean(v))})
            plot.append({"x": snr, "y": std, "series": kind})
    params = {"N": N, "P": P, "magnitudes": list(magnitudes), "snr_grid": list(snr_grid)}
    return ExperimentReport("fig5", seed, trials, params, stats, rows, plot,
                            time.perf_counter() - t0)


def fig5(trials=1000, seed=0, jobs=1, snr_grid=(0, 5, 10, 15, 20), **kw):
    return peak_variance_study(trials, snr_grid, seed, **kw)


def fig6(trials=1000, seed=0, jobs=1, alphas=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
         N=75, K=3, snr_db=10.0, methods=None):
    """Model-order accuracy versus the lambda scale factor."""
    builders = {
        "narrowband_P1000": lambda a: ZoomPlan.simple([1000], NARROWBAND, a),
        "narrowband_P75": lambda a: ZoomPlan.simple([N], NARROWBAND, a),
        "wideband_B75": lambda a: ZoomPlan.simple([N], WIDEBAND, a),
        "wideband_B75_nb25": lambda a: ZoomPlan.simple([N, 25], [WIDEBAND, NARROWBAND], a),
    }
    if methods:
        builders = {k: v for k, v in builders.items() if k in methods}
    settings = []
    for a in alphas:
        plans = {k: b(a) for k, b in builders.items()}
        settings.append(Setting({"alpha": a}, UniformData((N,), K, snr_db), plans,
                                {k: p.resolution() for k, p in plans.items()}))
    params = {"N": N, "K": K, "snr_db": snr_db, "alphas": list(alphas),
              "methods": list(builders)}
    return _mc("fig6", settings, trials, seed, params, "alpha", K, jobs)


def fig7(trials=100, seed=0, jobs=1, K=3, Ns=(30, 50, 100), ratios=(0.2, 0.4, 0.6, 0.8, 1.0),
         alpha=0.3):
    """Support recovery of a single wideband stage, noise-free, over (N, B/N)."""
    settings = []
    for N in Ns:
        for r in ratios:
            B = max(2, int(round(r * N)))
            plan = ZoomPlan.simple([B], WIDEBAND, alpha)
            settings.append(Setting({"N": N, "ratio": r, "B": B},
                                    UniformData((N,), K, NOISE_FREE, min_spacing=2 / N),
                                    {"wideband": plan}, {"wideband": plan.resolution()}))
    params = {"K": K, "Ns": list(Ns), "ratios": list(ratios), "alpha": alpha}
    rep = _mc("fig7", settings, trials, seed, params, "ratio", K, jobs, y_key="support_rate")
    rep.plot = [{"x": s["ratio"], "y": s["support_rate"], "series": f"N={s['N']}"}
                for s in rep.stats]
    return rep


def _mse_study(name, trials, seed, jobs, snrs, data, methods, K, params):
    settings = []
    for snr in snrs:
        plans = methods
        settings.append(Setting({"snr_db": snr}, data(snr), plans,
                                {k: p.resolution() for k, p in plans.items()}))
    rep = _mc(name, settings, trials, seed, params, "snr_db", K, jobs)
    rep.plot = (
        [{"x": s["snr_db"], "y": s["mse"], "series": f"{s['method']}_mse"} for s in rep.stats]
        + [{"x": s["snr_db"], "y": s["correct_rate"], "series": f"{s['method']}_order"}
           for s in rep.stats]
    )
    return rep


def fig8_lasso(trials=1000, seed=0, jobs=1, snrs=(5, 10, 15, 20), N=300, K=2, P=100,
               bands=(20, 5), alpha=0.4):
    methods = {
        f"narrowband_P{P}": ZoomPlan.simple([P], NARROWBAND, alpha),
        "wideband_" + "x".join(map(str, bands)): ZoomPlan.simple(list(bands), WIDEBAND, alpha),
    }
    params = {"N": N, "K": K, "P": P, "bands": list(bands), "alpha": alpha, "snrs": list(snrs)}
    return _mse_study("fig8_lasso", trials, seed, jobs, snrs,
                      lambda snr: UniformData((N,), K, snr), methods, K, params)


def fig9_spice(trials=100, seed=0, jobs=1, snrs=(5, 10, 15, 20), N=300, K=2, P=100,
               bands=(20, 5), max_iters=1000, tol=1e-6):
    cfg = SpiceConfig(max_iters=max_iters, tol=tol)
    methods = {
        f"narrowband_P{P}": ZoomPlan.simple([P], NARROWBAND, solver="spice", spice=cfg),
        "wideband_" + "x".join(map(str, bands)):
            ZoomPlan.simple(list(bands), WIDEBAND, solver="spice", spice=cfg),
    }
    params = {"N": N, "K": K, "P": P, "bands": list(bands), "snrs": list(snrs),
              "max_iters": max_iters, "tol": tol}
    return _mse_study("fig9_spice", trials, seed, jobs, snrs,
                      lambda snr: UniformData((N,), K, snr), methods, K, params)


def fig11_nonuniform(trials=1000, seed=0, jobs=1, snrs=(5, 10, 15, 20), N=400, K=2, P=200,
                     bands=(10, 10, 5), alpha=0.4):
    methods = {
        f"narrowband_P{P}": ZoomPlan.simple([P], NARROWBAND, alpha),
        "wideband_" + "x".join(map(str, bands)): ZoomPlan.simple(list(bands), WIDEBAND, alpha),
    }
    params = {"N": N, "K": K, "P": P, "bands": list(bands), "alpha": alpha, "snrs": list(snrs),
              "sampling": "uniform random on [0, N), sorted"}
    return _mse_study("fig11_nonuniform", trials, seed, jobs, snrs,
                      lambda snr: NonuniformData(N, K, snr), methods, K, params)


def _methods_2d(P, bands, alpha, dpss_w, max_elements, with_dpss=True):
    kw = {"max_elements": max_elements}
    methods = {
        f"narrowband_P{P}": ZoomPlan.simple([P], NARROWBAND, alpha, **kw),
        "wideband": ZoomPlan.simple(list(bands), WIDEBAND, alpha, **kw),
    }
    if with_dpss:
        methods["dpss"] = ZoomPlan.simple(list(bands), DPSS, alpha, dpss_w=dpss_w, **kw)
    return methods


def fig10_2d(trials=100, seed=0, jobs=1, snrs=(5, 10, 15, 20), N=30, K=2, P=49, bands=(7, 7),
             alpha=0.4, dpss_w=1 / 2.1, max_elements=10_000_000):
    """Two-dimensional comparison of narrowband, integrated and DPSS dictionaries."""
    methods = _methods_2d(P, bands, alpha, dpss_w, max_elements)
    params = {"N": N, "K": K, "P": P, "bands": list(bands), "alpha": alpha, "snrs": list(snrs),
              "dpss_w": dpss_w}
    return _mse_study("fig10_2d", trials, seed, jobs, snrs,
                      lambda snr: UniformData((N, N), K, snr), methods, K, params)


def fig12_modelorder(trials=100, seed=0, jobs=1, Ks=(4, 6, 8, 10), snrs=(10, 20), N=30,
                     P=49, bands=(7, 7), alphas=(0.2, 0.4), max_elements=10_000_000):
    """Model-order accuracy in 2-D; each method keeps its best alpha per (K, SNR)."""
    settings = []
    for K in Ks:
        for snr in snrs:
            for a in alphas:
                plans = _methods_2d(P, bands, a, 1 / 2.1, max_elements, with_dpss=False)
                lab = {"K": K, "snr_db": snr, "alpha": a, "k_true": K}
                settings.append(Setting(lab, UniformData((N, N), K, snr), plans,
                                        {k: p.resolution() for k, p in plans.items()}))
    params = {"N": N, "Ks": list(Ks), "snrs": list(snrs), "P": P, "bands": list(bands),
              "alphas": list(alphas)}
    rep = monte_carlo("fig12_modelorder", settings, trials, seed, params, "snr_db", jobs=jobs)
    best: dict = {}
    for s in rep.stats:
        key = (s["K"], s["snr_db"], s["method"])
        if key not in best or s["correct_rate"] > best[key]["correct_rate"]:
            best[key] = s
    rep.plot = [{"x": k[1], "y": s["correct_rate"], "series": f"{k[2]}_K{k[0]}"}
                for k, s in sorted(best.items())]
    return rep


def table1(trials=0, seed=0, jobs=1, P=1000, N=200, K=2,
           rows=((20, 5), (20, 40), (10, 10, 5))):
    """Modeled x-step cost of zoom pipelines relative to one narrowband solve
    with ``P`` atoms (the baseline is recorded in ``params``)."""
    stats = []
    for bands in rows:
        stats.append({
            "settings": ", ".join(f"B{i + 1}={b}" for i, b in enumerate(bands)),
            "relative_complexity": relative_complexity(P, N, K, bands),
        })
    plot = [{"x": s["settings"], "y": s["relative_complexity"], "series": "table1"}
            for s in stats]
    params = {"P": P, "N": N, "K": K, "rows": [list(r) for r in rows]}
    return ExperimentReport("table1", seed, 0, params, stats, [], plot, 0.0)


def custom(trials=100, seed=0, jobs=1, N=100, K=2, dims=1, snrs=(20,), stages=(20, 5),
           kinds="wideband", alpha=0.3, solver="lasso", min_spacing=None, P=None):
    """User-described study: one zoom plan, optionally against a narrowband baseline."""
    kinds = kinds.split(",") if isinstance(kinds, str) else list(kinds)
    if len(kinds) == 1:
        kinds = kinds * len(stages)
    methods = {"zoom": ZoomPlan.simple(list(stages), kinds, alpha, solver=solver)}
    if P:
        methods[f"narrowband_P{P}"] = ZoomPlan.simple([P], NARROWBAND, alpha, solver=solver)
    params = {"N": N, "K": K, "dims": dims, "snrs": list(snrs), "stages": list(stages),
              "kinds": kinds, "alpha": alpha, "solver": solver, "min_spacing": min_spacing,
              "P": P}
    return _mse_study("custom", trials, seed, jobs, snrs,
                      lambda snr: UniformData((N,) * dims, K, snr, min_spacing=min_spacing),
                      methods, K, params)


EXPERIMENTS: dict[str, Callable[..., ExperimentReport]] = {
    "fig5": fig5,
    "fig6": fig6,
    "fig7": fig7,
    "fig8_lasso": fig8_lasso,
    "fig9_spice": fig9_spice,
    "fig10_2d": fig10_2d,
    "fig11_nonuniform": fig11_nonuniform,
    "fig12_modelorder": fig12_modelorder,
    "table1": table1,
    "custom": custom,
}


def run_experiment(name: str, trials: int | None = None, seed: int = 0, jobs: int = 1,
                   **params) -> ExperimentReport:
    """Run a built-in experiment by name; unknown names raise ``KeyError``."""
    try:
        fn = EXPERIMENTS[name]
    except KeyError:
        raise KeyError(f"unknown experiment {name!r}; known: {', '.join(EXPERIMENTS)}") from None
    kw = dict(params)
    if trials is not None:
        kw["trials"] = trials
    return fn(seed=seed, jobs=jobs, **kw)
