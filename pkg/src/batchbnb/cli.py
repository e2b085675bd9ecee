"""Command-line driver: ``batchbnb {solve,rashomon,sweep,gen}``.

Exit codes: 0 certified optimal, 2 stopped at the time limit, 1 runtime
error, 64 bad usage. The log level is read from ``BATCHBNB_LOG_LEVEL``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import re
import sys
from pathlib import Path

from . import __version__
from .engine import SolverConfig, batch_size_sweep, solve
from .losses import LossKind
from .problem import generate_synthetic, load_csv, preprocess, save_csv, true_support
from .rashomon import (RashomonConfig, collect_rashomon, model_reliance, secondary_metrics,
                       support_frequency)
from .relaxation import RelaxConfig

EXIT_OK, EXIT_ERROR, EXIT_TIME_LIMIT, EXIT_USAGE = 0, 1, 2, 64
LOG_ENV = "BATCHBNB_LOG_LEVEL"

log = logging.getLogger("batchbnb.cli")

_GEN_KEYS = {"n": int, "p": int, "k": int, "rho": float, "loss": str, "seed": int, "snr": float}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def parse_gen_spec(text: str) -> dict:
    """``"n=200,p=100,k=10,rho=0.9,loss=squared,seed=1"`` -> dict (snr defaults to 5)."""
    spec = {"rho": 0.9, "loss": "squared", "seed": 0, "snr": 5.0}
    for part in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in _GEN_KEYS:
            raise UsageError(f"bad generator field {part!r}; keys are {sorted(_GEN_KEYS)}")
        try:
            spec[key] = _GEN_KEYS[key](value.strip())
        except ValueError:
            raise UsageError(f"bad value for {key}: {value!r}") from None
    missing = [key for key in ("n", "p", "k") if key not in spec]
    if missing:
        raise UsageError(f"generator spec is missing {missing}")
    spec["loss"] = LossKind.parse(spec["loss"]).value
    return spec


_UNITS = {"": 1, "b": 1, "kb": 10**3, "mb": 10**6, "gb": 10**9, "tb": 10**12,
          "kib": 2**10, "mib": 2**20, "gib": 2**30, "tib": 2**40}


def parse_bytes(text: str) -> int:
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*([a-zA-Z]*)\s*", text)
    if not m or m.group(2).lower() not in _UNITS:
        raise argparse.ArgumentTypeError(f"bad memory size {text!r} (e.g. 4GiB, 512MB)")
    return int(float(m.group(1)) * _UNITS[m.group(2).lower()])


def _batch_size(text: str):
    if text == "auto":
        return "auto"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("batch size must be a positive int or 'auto'") from None
    if value < 1:
        raise argparse.ArgumentTypeError("batch size must be >= 1")
    return value


def _sizes(text: str) -> list:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive ints")
    return sizes


def _add_data_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--gen", metavar="SPEC", help="generator spec, e.g. n=200,p=100,k=10,rho=0.9,loss=squared,seed=1")
    src.add_argument("--data", metavar="CSV", help="numeric CSV with a header row")
    p.add_argument("--response", default="y", help="response column of --data (default: y)")
    p.add_argument("--loss", choices=[k.value for k in LossKind],
                   help="loss for --data (default squared; --gen carries its own)")
    p.add_argument("--standardize", action="store_true",
                   help="center and unit-norm every column before solving")


def _add_model_args(p):
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--lambda2", type=float, required=True)
    p.add_argument("--batch-size", type=_batch_size, default=64)
    p.add_argument("--memory-budget", type=parse_bytes, default=parse_bytes("1GiB"))
    p.add_argument("--time-limit", type=float, default=math.inf)
    p.add_argument("--delta", type=float, default=1e-6, help="relative prune slack")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-iterations", type=int, default=2000)
    p.add_argument("--gap-tolerance", type=float, default=1e-6)
    p.add_argument("--check-interval", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="batchbnb", description="Certified sparse GLMs by batched branch and bound.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="certify the optimal k-sparse model")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out", help="certificate JSON path")
    p.add_argument("--report", help="run report JSON path (default: next to --out)")
    p.add_argument("--profile", metavar="CSV", help="write the component profile as CSV")

    p = sub.add_parser("rashomon", help="collect the certified epsilon-Rashomon set")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--top-n", type=int, default=None, help="keep only the N best supports")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--profile", metavar="CSV")

    p = sub.add_parser("sweep", help="certified solves over several batch sizes")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--sizes", type=_sizes, required=True, help="comma separated, e.g. 1,4,16,64")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--plot-data", metavar="JSON", help="also write the columns as JSON arrays")
    p.add_argument("--report", help="run report JSON path (default: <out>.report.json)")

    p = sub.add_parser("gen", help="write a synthetic dataset and its sidecar JSON")
    p.add_argument("--gen", metavar="SPEC", required=True)
    p.add_argument("--out", required=True, help="CSV path; the sidecar is <out>.json")
    return parser


# -- helpers ---------------------------------------------------------------

def _load_instance(args):
    if args.gen is not None:
        spec = parse_gen_spec(args.gen)
        if args.loss is not None and args.loss != spec["loss"]:
            raise UsageError("--loss conflicts with the loss in --gen")
        inst = generate_synthetic(spec["n"], spec["p"], spec["k"], correlation=spec["rho"],
                                  loss=spec["loss"], snr=spec["snr"], seed=spec["seed"],
                                  M=args.M, lambda2=args.lambda2)
        inst = inst.with_params(k=args.k)
        fingerprint = {"generator": spec}
    else:
        path = Path(args.data)
        inst = load_csv(path, args.response, args.loss or "squared", k=args.k, M=args.M,
                        lambda2=args.lambda2)
        fingerprint = {"file": str(path), "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
                       "response": args.response, "loss": inst.loss.value}
    if args.standardize:
        inst = preprocess(inst)
    fingerprint["standardize"] = bool(args.standardize)
    return inst, fingerprint


def _config(args) -> SolverConfig:
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    relax = RelaxConfig(max_iterations=args.max_iterations, gap_tolerance=args.gap_tolerance,
                        check_interval=args.check_interval)
    return SolverConfig(batch_size=args.batch_size, time_limit=args.time_limit,
                        prune_slack=args.delta, relax_config=relax,
                        memory_budget=args.memory_budget, workers=args.workers)


def _config_echo(config: SolverConfig, instance) -> dict:
    r = config.relax_config
    return {
        "k": instance.k, "M": instance.M, "lambda2": instance.lambda2,
        "loss": instance.loss.value, "batch_size": config.resolved_batch_size(instance),
        "batch_size_requested": config.batch_size,
        "time_limit": config.time_limit if math.isfinite(config.time_limit) else None,
        "delta": config.prune_slack, "workers": config.workers,
        "memory_budget": config.memory_budget,
        "relax": {"max_iterations": r.max_iterations, "gap_tolerance": r.gap_tolerance,
                  "check_interval": r.check_interval, "acceleration": r.acceleration},
    }


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_profile(path, cert) -> None:
    rows = [(name, s, pc) for name, s, pc in cert.profile.rows()]
    rows += [("lb_batches", cert.lb_batches, ""), ("reopt_batches", cert.reopt_batches, ""),
             ("nodes", cert.nodes_processed, "")]
    _write_csv(path, ["component", "seconds", "percent"], rows)


def _finite(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _summary(cert) -> str:
    return (f"value={cert.optimal_value!r} gap={cert.gap_percent:.6g}% "
            f"nodes={cert.nodes_processed} seconds={cert.profile.total:.3f} status={cert.status}")


def _status_code(cert) -> int:
    return EXIT_OK if cert.status == "optimal" else EXIT_TIME_LIMIT


# -- commands --------------------------------------------------------------

def cmd_solve(args) -> int:
    started = _now()
    instance, fingerprint = _load_instance(args)
    config = _config(args)
    cert = solve(instance, config)
    print(_summary(cert))
    if args.out:
        _write_json(args.out, cert.to_dict())
    if args.profile:
        _write_profile(args.profile, cert)
    report_path = args.report or (f"{Path(args.out).with_suffix('')}.report.json" if args.out else None)
    if report_path:
        _write_json(report_path, {
            "command": "solve", "argv": sys.argv[1:], "input": fingerprint,
            "config": _config_echo(config, instance), "certificate": cert.to_dict(),
            "profile": cert.profile_dict(), "pool": None,
            "started": started, "finished": _now(), "version": __version__,
        })
    return _status_code(cert)


def cmd_rashomon(args) -> int:
    started = _now()
    instance, fingerprint = _load_instance(args)
    config = _config(args)
    if args.top_n is not None and args.top_n < 1:
        raise UsageError("--top-n must be >= 1")
    cert, trie = collect_rashomon(instance, config, RashomonConfig(args.epsilon, args.top_n))
    print(_summary(cert) + f" pool={len(trie)}")
    out = Path(args.out_dir)
    idx = instance.feature_index
    names = instance.feature_names or tuple(f"x{int(j) + 1}" for j in idx)
    _write_json(out / "certificate.json", cert.to_dict())
    pool = trie.to_dict(feature_index=idx)
    pool["epsilon"] = args.epsilon
    pool["cap"] = args.top_n
    _write_json(out / "pool.json", pool)
    freq = support_frequency(trie, instance.p)
    _write_csv(out / "frequency.csv", ["feature", "name", "frequency"],
               [(int(idx[j]) + 1, names[j], float(freq[j])) for j in range(instance.p)])
    rel = model_reliance(trie, instance)
    _write_csv(out / "reliance.csv", ["feature", "name", "min", "mean", "max", "extension"],
               [(int(idx[j]) + 1, names[j], float(rel["min"][j]), float(rel["mean"][j]),
                 float(rel["max"][j]), int(rel["extension"])) for j in range(instance.p)])
    if instance.loss is LossKind.LOGISTIC:
        rows = secondary_metrics(trie, instance)
        _write_csv(out / "metrics.csv", ["rank", "record", "objective", "auc", "accuracy"],
                   [(r["rank"], r["record"], r["objective"], r["auc"], r["accuracy"]) for r in rows])
    else:
        _write_csv(out / "metrics.csv", ["rank", "record", "objective"],
                   [(rank, m, float(obj)) for rank, (m, obj) in enumerate(
                       sorted(enumerate(trie.objectives), key=lambda t: (t[1], t[0])), start=1)])
    if args.profile:
        _write_profile(args.profile, cert)
    _write_json(out / "report.json", {
        "command": "rashomon", "argv": sys.argv[1:], "input": fingerprint,
        "config": {**_config_echo(config, instance), "epsilon": args.epsilon, "top_n": args.top_n},
        "certificate": cert.to_dict(), "profile": cert.profile_dict(),
        "pool": str(out / "pool.json"), "started": started, "finished": _now(),
        "version": __version__,
    })
    return _status_code(cert)


def cmd_sweep(args) -> int:
    started = _now()
    instance, fingerprint = _load_instance(args)
    config = _config(args)
    rows = batch_size_sweep(instance, args.sizes, config)
    _write_csv(args.out, ["batch_size", "seconds", "nodes", "gap_percent", "optimal_value", "status"],
               [(r["batch_size"], r["seconds"], r["nodes"], r["gap_percent"], r["optimal_value"],
                 r["status"]) for r in rows])
    keys = ["batch_size", "seconds", "nodes", "gap_percent", "status"]
    if args.plot_data:
        _write_json(args.plot_data, {key: [_finite(r[key]) for r in rows] for key in keys})
    _write_json(args.report or f"{Path(args.out).with_suffix('')}.report.json", {
        "command": "sweep", "argv": sys.argv[1:], "input": fingerprint,
        "config": {**_config_echo(config, instance), "sizes": args.sizes},
        "certificate": None, "profile": None, "pool": None, "rows": [
            {key: _finite(r[key]) for key in keys + ["optimal_value"]} for r in rows],
        "started": started, "finished": _now(), "version": __version__,
    })
    for r in rows:
        print(f"batch_size={r['batch_size']} seconds={r['seconds']:.3f} nodes={r['nodes']} "
              f"gap={r['gap_percent']:.6g}% status={r['status']}")
    if any(str(r["status"]).startswith("error") for r in rows):
        return EXIT_ERROR
    return EXIT_OK if all(r["status"] == "optimal" for r in rows) else EXIT_TIME_LIMIT


def cmd_gen(args) -> int:
    spec = parse_gen_spec(args.gen)
    inst = generate_synthetic(spec["n"], spec["p"], spec["k"], correlation=spec["rho"],
                              loss=spec["loss"], snr=spec["snr"], seed=spec["seed"])
    save_csv(inst, args.out)
    support = [int(j) + 1 for j in true_support(spec["p"], spec["k"])]
    _write_json(f"{args.out}.json", {"generator": spec, "true_support": support,
                                     "response_column": "y", "rows": inst.n, "features": inst.p})
    print(f"wrote {args.out} ({inst.n} x {inst.p}) and {args.out}.json")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "rashomon": cmd_rashomon, "sweep": cmd_sweep, "gen": cmd_gen}


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"batchbnb: error: {exc}\n")
        return EXIT_USAGE
    except (ValueError, OSError, FloatingPointError, RuntimeError) as exc:
        sys.stderr.write(f"batchbnb: error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
