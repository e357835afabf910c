"""Command line front end: ``ate simulate | tk | test | diagnose``.

Exit codes: 0 success, 2 bad input (config, arguments, matrix file),
3 failure while computing. ATE_SEED overrides the config seed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .ate_core import solve_tk
from .clt_diagnostics import check_conditions
from .inference import cluster_power_test, dense_subgraph_test, rank_confidence_set, rank_test
from .model import model_from_spec, read_matrix
from .moments import moment_table, zero_moment_table
from .montecarlo import (
    ExperimentConfig,
    histogram_csv,
    records_csv,
    run_experiment,
    summarize,
)

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3


class InputError(Exception):
    pass


def _load_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError("cannot read %s: %s" % (path, exc))
    try:
        return json.loads(text), text
    except json.JSONDecodeError as exc:
        raise InputError("malformed JSON in %s: %s" % (path, exc))


def _seed_override(seed):
    env = os.environ.get("ATE_SEED")
    if env is None or env == "":
        return seed
    try:
        return int(env)
    except ValueError:
        raise InputError("ATE_SEED must be an integer, got %r" % env)


def _experiment_config(path):
    raw, text = _load_json(path)
    if not isinstance(raw, dict):
        raise InputError("config must be a JSON object")
    try:
        raw = dict(raw, seed=_seed_override(raw.get("seed", 0)))
        cfg = ExperimentConfig.from_dict(raw)
        model, _ = model_from_spec(cfg.model)
        for s in cfg.statistics:
            if int(s["k"]) > model.K:
                raise ValueError("statistic asks for k=%s but the model has K=%d" % (s["k"], model.K))
    except (ValueError, TypeError, KeyError) as exc:
        raise InputError("invalid config: %s" % exc)
    return cfg, text


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _finite(obj):
    """Strict JSON: NaN becomes null and infinities become the strings "inf" / "-inf"."""
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _dump(obj):
    return json.dumps(_finite(obj), indent=2, sort_keys=True, default=_json_default, allow_nan=False)


def _svg_histogram(hist, title):
    edges = np.asarray(hist["edges"])
    counts = np.asarray(hist["counts"], dtype=float)
    total = counts.sum() + hist["below"] + hist["above"]
    width = edges[1] - edges[0]
    dens = counts / max(total, 1) / width
    grid = np.linspace(edges[0], edges[-1], 241)
    phi = np.exp(-grid**2 / 2) / math.sqrt(2 * math.pi)
    top = max(dens.max(initial=0), phi.max()) * 1.1
    W, H, pad = 640, 360, 30

    def sx(x):
        return pad + (x - edges[0]) / (edges[-1] - edges[0]) * (W - 2 * pad)

    def sy(y):
        return H - pad - y / top * (H - 2 * pad)

    bars = "".join(
        '<rect x="%.2f" y="%.2f" width="%.2f" height="%.2f" fill="#9ab"/>'
        % (sx(a), sy(d), sx(a + width) - sx(a), sy(0) - sy(d))
        for a, d in zip(edges[:-1], dens)
    )
    line = " ".join("%.2f,%.2f" % (sx(x), sy(y)) for x, y in zip(grid, phi))
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">' % (W, H)
        + '<text x="%d" y="18" font-size="14">%s</text>' % (pad, title)
        + bars
        + '<polyline fill="none" stroke="#c33" stroke-width="1.5" points="%s"/>' % line
        + '<line x1="%d" y1="%.2f" x2="%d" y2="%.2f" stroke="#000"/>' % (pad, sy(0), W - pad, sy(0))
        + "</svg>\n"
    )


def cmd_simulate(args):
    cfg, text = _experiment_config(args.config)
    t0 = time.perf_counter()
    records = run_experiment(cfg, threads=args.threads)
    t_run = time.perf_counter() - t0
    summary = summarize(records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    files["records.csv"] = records_csv(records, cfg.name)
    summary_doc = {"experiment": cfg.name, "replications": cfg.replications, "statistics": summary}
    files["summary.json"] = _dump(summary_doc) + "\n"
    for sid, entry in summary.items():
        if entry.get("available"):
            files["hist_%s.csv" % sid] = histogram_csv(entry["histogram"])
            if args.svg:
                files["hist_%s.svg" % sid] = _svg_histogram(entry["histogram"], sid)
    for name, body in files.items():
        (out / name).write_text(body)
    manifest = {
        "config": {"path": str(Path(args.config).resolve()), "sha256": hashlib.sha256(text.encode()).hexdigest()},
        "versions": {"spikeate": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "seeds": {"base": cfg.seed, "from_env": "ATE_SEED" in os.environ and os.environ["ATE_SEED"] != ""},
        "threads": args.threads,
        "outputs": sorted(files) + ["manifest.json"],
        "timings": {"run_seconds": t_run, "total_seconds": time.perf_counter() - t0},
    }
    (out / "manifest.json").write_text(_dump(manifest) + "\n")
    print(_dump({k: {f: v.get(f) for f in ("mean", "sd", "ad_p", "n_valid")} for k, v in summary.items()}))
    return EXIT_OK


def _model_and_moments(path):
    raw, _ = _load_json(path)
    if not isinstance(raw, dict):
        raise InputError("config must be a JSON object")
    spec = raw.get("model", raw)
    try:
        model, noise = model_from_spec(spec)
    except (ValueError, TypeError, KeyError) as exc:
        raise InputError("invalid model spec: %s" % exc)
    seed = _seed_override(raw.get("seed", 0))
    return raw, model, noise, seed


def cmd_tk(args):
    raw, model, noise, seed = _model_and_moments(args.config)
    if not 1 <= args.k <= model.K:
        raise InputError("k=%d outside 1..%d" % (args.k, model.K))
    L = int(raw.get("L", 4))
    if np.any(noise.sigma2) or np.any(noise.diag_mean):
        moments = moment_table(noise, L, int(raw.get("moment_draws", 2000)), seed)
    else:
        moments = zero_moment_table(model.n, L)
    c0 = args.c0 if args.c0 is not None else float(raw.get("c0", 0.5))
    sol = solve_tk(args.k, model, moments, args.method, c0=c0)
    print(_dump(sol.to_dict()))
    return EXIT_OK


def _read_input_matrix(path):
    try:
        return read_matrix(path)
    except (OSError, ValueError) as exc:
        raise InputError("cannot read matrix %s: %s" % (path, exc))


def cmd_test(args):
    try:
        return _run_test(args)
    except ValueError as exc:
        # degenerate or malformed data is an input problem, not a crash
        raise InputError(str(exc))


def _run_test(args):
    X = _read_input_matrix(args.matrix)
    if not np.allclose(X, X.T, atol=1e-12):
        raise InputError("matrix is not symmetric")
    loops = None if args.self_loops == "auto" else args.self_loops == "yes"
    if args.which == "subgraph":
        res = dense_subgraph_test(X, self_loops=loops)
    elif args.which == "cluster-power":
        if args.K is None or args.k is None:
            raise InputError("cluster-power needs --K and --k")
        if not 1 <= args.k <= args.K:
            raise InputError("k must lie in 1..K")
        res = cluster_power_test(X, args.K, args.k, self_loops=loops)
    else:
        if args.kmax is not None:
            cs = rank_confidence_set(X, args.kmax, args.alpha, args.quantile)
            print(_dump(cs))
            return EXIT_OK
        if args.k0 is None:
            raise InputError("rank needs --k0 or --kmax")
        res = rank_test(X, args.k0)
    if args.format == "csv":
        print("name,statistic,p_value,alternative")
        print(res.csv_row())
    else:
        print(_dump(res.to_dict()))
    return EXIT_OK


def cmd_diagnose(args):
    raw, model, noise, seed = _model_and_moments(args.config)
    x = None
    if args.direction:
        from .montecarlo import resolve_direction

        try:
            x = resolve_direction(args.direction, model, 1)
        except ValueError as exc:
            raise InputError(str(exc))
        x = x / np.linalg.norm(x)
    report = check_conditions(model, noise, x, x, args.mc_draws, seed)
    print(report.table() if args.format == "table" else _dump(report.to_dict()))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="ate", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a replication experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--svg", action="store_true", help="also write SVG histograms")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tk", help="solve for t_k and print the solution")
    p.add_argument("--config", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--method", default="newton-approx", choices=["newton-approx", "newton-full", "bisection"])
    p.add_argument("--c0", type=float, default=None)
    p.set_defaults(func=cmd_tk)

    p = sub.add_parser("test", help="run a test on an adjacency matrix")
    p.add_argument("which", choices=["subgraph", "rank", "cluster-power"])
    p.add_argument("--matrix", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--k0", type=int)
    p.add_argument("--kmax", type=int)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--quantile", default="one-sided", choices=["one-sided", "two-sided"])
    p.add_argument("--self-loops", default="auto", choices=["auto", "yes", "no"])
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("diagnose", help="report condition margins for a model")
    p.add_argument("--config", required=True)
    p.add_argument("--direction", default=None, help="a1, e1, v or omit")
    p.add_argument("--mc-draws", type=int, default=0)
    p.add_argument("--format", default="json", choices=["json", "table"])
    p.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - any failure past input checks is a runtime error
        print("error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
