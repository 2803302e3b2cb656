"""Command-line front end: ``bandsparse <estimate|experiment|scan|costs>``.

Exit codes are 0 on success, 1 on a numerical failure and 2 on bad usage or
unreadable input. Flags override values from ``--config`` which override the
built-in defaults; the merged configuration is written next to every output.
"""
from __future__ import annotations

import argparse
import csv
import inspect
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .costs import admm_cost, zoom_budget
from .dictionary import (
    DPSS,
    KINDS,
    NARROWBAND,
    WIDEBAND,
    BandGrid,
    DpssConfig,
    SamplingScheme,
    build_dictionary,
    inner_product_scan,
)
from .numerics import NumericsError
from .solve import SpiceConfig
from .zoom import ZoomPlan, band_ratio, ratio_threshold, recommend_bands, run_zoom
from .sim.experiments import EXPERIMENTS, run_experiment

log = logging.getLogger("bandsparse")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
SEED_ENV = "BANDSPARSE_SEED"


class InputError(ValueError):
    """Malformed user input; maps to exit code 2."""


# ---------------------------------------------------------------- I/O helpers

def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_series(path) -> tuple[np.ndarray, SamplingScheme]:
    """Parse a CSV series into data and sampling scheme.

    1-D files have columns ``time,re,im``. M-D files have one index column
    per dimension followed by ``re,im`` and must cover the full grid.
    Returns ``y`` flattened with the first dimension fastest.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise InputError(f"{path}: expected a header and at least one data row")
    header = [h.strip().lower() for h in rows[0]]
    if "re" not in header or "im" not in header:
        raise InputError(f"{path}: header must contain 're' and 'im' columns, got {header}")
    idx_cols = [i for i, h in enumerate(header) if h not in ("re", "im")]
    if not idx_cols:
        raise InputError(f"{path}: no time/index column")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from exc
    if data.shape[1] != len(header):
        raise InputError(f"{path}: rows have {data.shape[1]} fields, header has {len(header)}")
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: non-finite values")
    values = data[:, header.index("re")] + 1j * data[:, header.index("im")]
    coords = data[:, idx_cols]

    if len(idx_cols) == 1:
        order = np.argsort(coords[:, 0], kind="stable")
        t = coords[order, 0]
        if np.any(np.diff(t) <= 0):
            raise InputError(f"{path}: duplicate time instants")
        return values[order], SamplingScheme((tuple(t),))

    axes = [np.unique(coords[:, m]) for m in range(coords.shape[1])]
    shape = tuple(a.size for a in axes)
    if int(np.prod(shape)) != len(values):
        raise InputError(f"{path}: {len(values)} rows do not fill a {shape} grid")
    Y = np.full(shape, np.nan + 0j)
    pos = tuple(np.searchsorted(a, coords[:, m]) for m, a in enumerate(axes))
    Y[pos] = values
    if np.isnan(Y).any():
        raise InputError(f"{path}: grid has duplicate or missing points")
    return Y.ravel(order="F"), SamplingScheme(tuple(tuple(a) for a in axes))


def _table_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    if records:
        writer = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(records)
    return buf.getvalue()


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated integers, got {text!r}") from None


# ----------------------------------------------------------------- commands

def _plan(cfg: dict) -> ZoomPlan:
    stages = _int_list(cfg.get("stages") or "40,50")
    kinds = str(cfg.get("kind") or WIDEBAND).split(",")
    alpha = cfg.get("alpha") or [0.3]
    spice_cfg = SpiceConfig(**cfg["spice"]) if cfg.get("spice") else SpiceConfig()
    try:
        return ZoomPlan.simple(stages, kinds if len(kinds) > 1 else kinds[0], list(alpha),
                               solver=cfg.get("solver") or "lasso", spice=spice_cfg)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_estimate(cfg: dict) -> int:
    if not cfg.get("input"):
        raise InputError("estimate needs --input")
    y, scheme = read_series(cfg["input"])
    plan = _plan(cfg)
    result = run_zoom(y, scheme, plan)
    out = Path(cfg["out"])
    table = [
        {**{f"f{m + 1}": float(f[m]) for m in range(scheme.dims)},
         "amp_re": float(a.real), "amp_im": float(a.imag), "magnitude": float(abs(a))}
        for f, a in zip(result.frequencies, result.amplitudes)
    ]
    write_atomic(out / "result.json", result.to_json())
    if cfg["format"] == "csv":
        write_atomic(out / "frequencies.csv", _table_csv(table))
    else:
        write_atomic(out / "frequencies.json", json.dumps(table, indent=1))
    print(f"model order: {result.model_order}")
    for row in table:
        freqs = " ".join(f"{row[f'f{m + 1}']:.6f}" for m in range(scheme.dims))
        print(f"  f = {freqs}  |a| = {row['magnitude']:.4g}")
    print(f"op count: {result.op_count:.4g} over {len(result.stages)} stage(s)")
    return EXIT_OK


def _experiment_kwargs(name: str, cfg: dict) -> dict:
    fn = EXPERIMENTS[name]
    accepted = inspect.signature(fn).parameters
    kw = dict(cfg.get("params") or {})
    if cfg.get("k") is not None:
        kw["K"] = cfg["k"]
    snr = cfg.get("snr_db")
    if snr:
        for key, value in (("snrs", list(snr)), ("snr_grid", list(snr)), ("snr_db", snr[0])):
            if key in accepted:
                kw[key] = value
                break
    if name == "custom":
        if cfg.get("stages"):
            kw["stages"] = _int_list(cfg["stages"])
        if cfg.get("alpha"):
            kw["alpha"] = list(cfg["alpha"])
        if cfg.get("solver"):
            kw["solver"] = cfg["solver"]
        if cfg.get("kind"):
            kw["kinds"] = cfg["kind"]
    has_var_kw = any(p.kind is p.VAR_KEYWORD for p in accepted.values())
    unknown = [k for k in kw if k not in accepted and not has_var_kw]
    if unknown:
        raise InputError(f"experiment {name} does not take {', '.join(unknown)}")
    return kw


def cmd_experiment(cfg: dict) -> int:
    name = cfg.get("experiment")
    if name not in EXPERIMENTS:
        raise InputError(f"unknown experiment {name!r}; known: {', '.join(EXPERIMENTS)}")
    kw = _experiment_kwargs(name, cfg)
    report = run_experiment(name, cfg.get("trials"), seed=cfg["seed"], jobs=cfg["jobs"], **kw)
    out = Path(cfg["out"])
    if cfg["format"] == "csv":
        write_atomic(out / f"{name}_stats.csv", report.stats_csv())
    else:
        write_atomic(out / f"{name}.json", report.to_json())
    write_atomic(out / f"{name}_rows.csv", report.rows_csv())
    write_atomic(out / f"{name}_plot.csv", report.plot_csv())
    print(f"{name}: {report.trials} trial(s), seed {report.seed}, {report.wall_time:.1f} s")
    for s in report.stats:
        print("  " + ", ".join(f"{k}={_short(v)}" for k, v in s.items()))
    return EXIT_OK


def _short(v):
    return f"{v:.4g}" if isinstance(v, float) else v


def cmd_scan(cfg: dict) -> int:
    if not cfg.get("input"):
        raise InputError("scan needs --input")
    y, scheme = read_series(cfg["input"])
    kinds = cfg.get("scan_kinds") or [NARROWBAND, WIDEBAND]
    sizes = {NARROWBAND: cfg.get("P") or 50, WIDEBAND: cfg.get("B") or 50, DPSS: cfg.get("B") or 50}
    records = []
    for kind in kinds:
        if kind not in KINDS:
            raise InputError(f"unknown dictionary kind {kind!r}")
        n = int(sizes[kind])
        grid = BandGrid.points(n) if kind == NARROWBAND else BandGrid.uniform(n)
        dpss = DpssConfig(scheme.shape[0], 1 / 2.1) if kind == DPSS else None
        try:
            D = build_dictionary(scheme, [grid] * scheme.dims, kind, dpss)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        mags = inner_product_scan(D, y, normalize=cfg.get("normalize", False))
        for i, mag in enumerate(mags):
            rec = {"kind": kind, "index": i}
            for m in range(scheme.dims):
                rec[f"lo{m + 1}"] = float(D.lo[i, m])
                rec[f"hi{m + 1}"] = float(D.hi[i, m])
            rec["magnitude"] = float(mag)
            records.append(rec)
    out = Path(cfg["out"])
    if cfg["format"] == "csv":
        write_atomic(out / "scan.csv", _table_csv(records))
    else:
        write_atomic(out / "scan.json", json.dumps(records, indent=1))
    for kind in kinds:
        sub = [r for r in records if r["kind"] == kind]
        top = max(sub, key=lambda r: r["magnitude"])
        print(f"{kind}: {len(sub)} columns, peak {top['magnitude']:.4g} at index {top['index']}")
    return EXIT_OK


def cmd_costs(cfg: dict) -> int:
    report: dict = {}
    want = [k for k in ("ratio", "budget", "recommend", "admm") if cfg.get(k)]
    if not want:
        raise InputError("costs needs at least one of --ratio, --budget, --recommend, --admm")

    def need(*keys):
        missing = [k for k in keys if cfg.get(k) is None]
        if missing:
            raise InputError("missing " + ", ".join(f"--{k}" for k in missing))
        return [cfg[k] for k in keys]

    if "ratio" in want:
        B, N = need("B", "N")
        report["band_ratio"] = band_ratio(int(B), int(N))
    if "budget" in want:
        P, N, K, eta, stages = need("P", "N", "K", "eta", "stages")
        report["zoom_budget"] = zoom_budget(int(P), int(N), int(K), float(eta),
                                            int(_int_list(stages)[0])).as_dict()
    if "recommend" in want:
        N, stages = need("N", "stages")
        n_stages = int(_int_list(stages)[0])
        largest = recommend_bands(int(N), n_stages, "largest")
        smallest = recommend_bands(int(N), n_stages, "smallest")
        report["recommend_bands"] = {
            "B": largest, "band_ratio": band_ratio(largest, int(N)),
            "smallest_B": smallest, "smallest_band_ratio": band_ratio(smallest, int(N)),
            "threshold": ratio_threshold(n_stages), "stages": n_stages,
        }
    if "admm" in want:
        N, P = need("N", "P")
        report["admm_cost"] = admm_cost(int(N), int(P))
    text = json.dumps(report, indent=1)
    print(text)
    if cfg.get("out_given"):
        write_atomic(Path(cfg["out"]) / "costs.json", text)
    return EXIT_OK


COMMANDS = {"estimate": cmd_estimate, "experiment": cmd_experiment,
            "scan": cmd_scan, "costs": cmd_costs}


# ----------------------------------------------------------------- parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, help=f"random seed (default: ${SEED_ENV} or 0)")
    common.add_argument("--format", choices=("json", "csv"), help="primary output format")
    common.add_argument("--config", help="JSON file with default option values")
    common.add_argument("--jobs", type=int, help="worker processes for trials")
    common.add_argument("-v", "--verbose", action="store_true")

    plan = argparse.ArgumentParser(add_help=False)
    plan.add_argument("--stages", help='bands per stage, e.g. "40,50"')
    plan.add_argument("--alpha", type=float, action="append",
                      help="lambda fraction, repeat once per stage")
    plan.add_argument("--solver", choices=("lasso", "spice"))
    plan.add_argument("--kind", help="dictionary kind per stage, comma separated")

    parser = argparse.ArgumentParser(prog="bandsparse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", parents=[common, plan], help="zoom estimate on a data file")
    p.add_argument("--input", help="CSV series (time,re,im or index columns plus re,im)")

    p = sub.add_parser("experiment", parents=[common, plan], help="run a Monte Carlo study")
    p.add_argument("experiment", nargs="?", help=f"one of {', '.join(EXPERIMENTS)}")
    p.add_argument("--trials", type=int)
    p.add_argument("--snr-db", dest="snr_db", type=float, action="append")
    p.add_argument("--k", type=int, help="number of components")
    p.add_argument("--param", action="append", default=None, metavar="KEY=JSON",
                   help="extra experiment parameter, value parsed as JSON")

    p = sub.add_parser("scan", parents=[common], help="inner-product scan of a data file")
    p.add_argument("--input")
    p.add_argument("--scan-kind", dest="scan_kinds", action="append", choices=KINDS)
    p.add_argument("--P", type=int, help="narrowband grid size")
    p.add_argument("--B", type=int, help="number of wideband bands")
    p.add_argument("--normalize", action="store_true", default=None)

    p = sub.add_parser("costs", parents=[common], help="cost model and band design rule")
    for flag in ("ratio", "budget", "recommend", "admm"):
        p.add_argument(f"--{flag}", action="store_true", default=None)
    for flag in ("B", "N", "P", "K"):
        p.add_argument(f"--{flag}", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--stages", help="number of zoom stages")
    return parser


def _load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError("config file must hold a JSON object")
    flat = {k: v for k, v in raw.items() if k != "plan"}
    flat.update(raw.get("plan") or {})
    return flat


def _parse_params(items) -> dict:
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags, in that order."""
    env_seed = os.environ.get(SEED_ENV)
    try:
        seed = int(env_seed) if env_seed else 0
    except ValueError:
        raise InputError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    cfg = {"out": ".", "seed": seed, "format": "json", "jobs": os.cpu_count() or 1}
    file_cfg = _load_config(args.config) if args.config else {}
    cfg.update(file_cfg)
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "param")}
    if args.command == "experiment" and args.param:
        flags["params"] = {**(cfg.get("params") or {}), **_parse_params(args.param)}
    cfg.update(flags)
    cfg["out_given"] = args.out is not None or "out" in file_cfg
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        code = COMMANDS[args.command](cfg)
        if args.command != "costs" or cfg["out_given"]:
            echo = {k: v for k, v in sorted(cfg.items()) if k not in ("out_given", "verbose")}
            write_atomic(Path(cfg["out"]) / f"{args.command}_config.json",
                         json.dumps(echo, indent=1, default=str))
        return code
    except InputError as exc:
        print(f"bandsparse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericsError as exc:
        print(f"bandsparse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"bandsparse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
