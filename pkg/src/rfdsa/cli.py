"""Command-line runner: one subcommand per experiment.

Each run writes its CSV tables and a ``manifest.json`` (arguments, package
versions, seed, threshold checks) into ``--out``. With ``--check`` the exit
code is non-zero when any check fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

import rfdsa
from rfdsa import experiments as ex
from rfdsa.dsa import sim
from rfdsa.dsa.classifiers import CLASSIFIER_KINDS
from rfdsa.nnet import checkpoint

SUBCOMMANDS = ("train-base", "ewc-demo", "outlier-eval", "replay-eval", "superimposed-eval", "simulate")

log = logging.getLogger("rfdsa")


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfdsa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", type=Path, default=Path("runs") / name)
        s.add_argument("--config", type=Path, help="flat key=value file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a single config key (repeatable)")
        s.add_argument("--check", action="store_true", help="exit non-zero when a threshold check fails")
        if name == "simulate":
            s.add_argument("--classifier", choices=CLASSIFIER_KINDS,
                           help="run one classifier instead of the full comparison suite")
            s.add_argument("--model", type=Path, help="checkpoint for --classifier model")
            s.add_argument("--jamming", type=_on_off, default=True)
            s.add_argument("--traffic-fusion", type=_on_off, default=False)
            s.add_argument("--fusion-weight", type=float, default=0.2)
            s.add_argument("--outliers", type=_on_off, default=False)
            s.add_argument("--superposition", type=_on_off, default=False)
    return p


def _read_pairs(args) -> dict[str, str]:
    pairs = {}
    if args.config is not None:
        pairs.update(sim.parse_config_text(args.config.read_text()))
    for item in args.set:
        if "=" not in item:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def _override(obj, pairs: dict[str, str], used: set):
    """Apply matching keys to a (possibly nested) frozen dataclass."""
    changes = {}
    for f in dataclasses.fields(obj):
        cur = getattr(obj, f.name)
        if dataclasses.is_dataclass(cur):
            changes[f.name] = _override(cur, pairs, used)
        elif f.name in pairs:
            used.add(f.name)
            changes[f.name] = sim._coerce(pairs[f.name], cur)
    return dataclasses.replace(obj, **changes)


def _experiment_config(default, pairs):
    used: set = set()
    cfg = _override(default, pairs, used)
    unknown = set(pairs) - used
    if unknown:
        raise SystemExit(f"unknown config keys: {', '.join(sorted(unknown))}")
    return cfg


def _jsonable(v):
    if dataclasses.is_dataclass(v):
        return {k: _jsonable(x) for k, x in dataclasses.asdict(v).items()}
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    return v


def run(args) -> dict:
    pairs = _read_pairs(args)
    if args.command == "train-base":
        cfg = _experiment_config(ex.BaseConfig(), pairs)
        return cfg, ex.train_base(args.seed, args.out, cfg)
    if args.command == "ewc-demo":
        cfg = _experiment_config(ex.EWCConfig(), pairs)
        return cfg, ex.ewc_demo(args.seed, args.out, cfg)
    if args.command == "outlier-eval":
        cfg = _experiment_config(ex.OutlierConfig(), pairs)
        return cfg, ex.outlier_eval(args.seed, args.out, cfg)
    if args.command == "replay-eval":
        cfg = _experiment_config(ex.ReplayConfig(), pairs)
        return cfg, ex.replay_eval(args.seed, args.out, cfg)
    if args.command == "superimposed-eval":
        cfg = _experiment_config(ex.SuperposedConfig(), pairs)
        res = ex.superimposed_eval(args.seed, args.out, cfg)
        rec = ex.ica_recovery(args.seed, cfg.trials)
        res["recovery"] = {k: v for k, v in rec.items() if k != "checks"}
        res["checks"] = rec["checks"] + res["checks"]
        return cfg, res

    options = sim.Options(jamming=args.jamming, traffic_fusion=args.traffic_fusion,
                          fusion_weight=args.fusion_weight, outliers=args.outliers,
                          superposition=args.superposition)
    cfg = sim.apply_overrides(sim.ScenarioConfig(options=options), pairs)
    model = checkpoint.load(args.model) if args.model is not None else None
    if args.classifier == "model" and model is None:
        raise SystemExit("--classifier model needs --model CHECKPOINT")
    classifiers = (args.classifier,) if args.classifier else ex.SIM_SUITE
    return cfg, ex.simulate(args.seed, args.out, cfg, classifiers, model=model,
                            compare_jamming=args.classifier is None)


def write_manifest(args, cfg, result: dict) -> Path:
    checks = [dict(zip(("name", "value", "op", "threshold", "passed"), c)) for c in result["checks"]]
    summary = {k: v for k, v in result.items() if k not in ("checks", "model", "sweep", "series", "rows")}
    manifest = {
        "command": args.command,
        "seed": args.seed,
        "config": _jsonable(cfg),
        "versions": {"rfdsa": rfdsa.__version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "results": _jsonable(summary),
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
    path = Path(args.out) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    cfg, result = run(args)
    path = write_manifest(args, cfg, result)
    ok = True
    for name, value, op, thr, passed in result["checks"]:
        log.info("%-32s %12.4f %s %-8g %s", name, value, op, thr, "PASS" if passed else "FAIL")
        ok &= passed
    log.info("manifest: %s", path)
    return 0 if ok or not args.check else 1


if __name__ == "__main__":
    sys.exit(main())
