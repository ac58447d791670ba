"""Command line entry point ``roa``.

    roa run <config.json> [--jobs N] [--resume] [--out DIR] [prover flags]
    roa verify-net <system.json> <net.txt> --target LEVEL [prover flags]
    roa volume <config.json> --region quadratic:C|neural:C [--net FILE]
    roa plot <config.json> [--out DIR]

Exit codes: 0 success, 2 verification failed, 3 configuration error,
4 box budget exceeded. Prover flags are ``--delta``, ``--min-width`` and
``--budget``; on ``run`` they override every stage that uses the prover.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .contour import export_contours
from .learner import MlpNet
from .linalg import DimensionError
from .neuralverify import neural_verifier
from .pipeline import (
    EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, EXIT_VERIFICATION, ConfigError, _jsonable, load_config,
    make_system, resolve_config, run,
)
from .prover import NoLevel, ResourceExhausted
from .volume import DegenerateReference, estimate_volume, neural_region, quadratic_region


def _out_dir(cfg: dict, config_path: str, override=None) -> Path:
    if override:
        return Path(override)
    if cfg.get("output"):
        return Path(cfg["output"])
    return Path(os.path.dirname(os.path.abspath(config_path))) / "out" / cfg["system"]["name"]


def _print(obj) -> None:
    print(json.dumps(_jsonable(obj), indent=2))


def cmd_run(args) -> int:
    report = run(args.config, out=args.out, resume=args.resume, jobs=args.jobs,
                 delta=args.delta, min_width=args.min_width, budget=args.budget)
    summary = {"status": report["status"], "levels": report["levels"],
               "globally_stable": report["globally_stable"], "nesting": report["nesting"]}
    if report["failed_stage"]:
        summary["failed_stage"] = report["failed_stage"]
    _print(summary)
    return report["exit_code"]


def _system_config(path) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    if "system" not in raw:
        raw = {"system": raw}
    raw = {"system": raw["system"], "stages": {}}
    return resolve_config(raw)


def cmd_verify_net(args) -> int:
    cfg = _system_config(args.system)
    sysm = make_system(cfg)
    net = MlpNet.load(args.net)
    kw = {"delta": args.delta} if args.delta is not None else {}
    c1, c2, res = neural_verifier(sysm, net, args.target, tol=args.tol, min_width=args.min_width,
                                  budget=args.budget, jobs=args.jobs, **kw)
    _print({"c1_V": c1, "c2_V": c2, **res.to_dict()})
    return EXIT_OK


def _region(spec: str, sysm, net_path):
    kind, _, level = spec.partition(":")
    try:
        c = float(level)
    except ValueError as exc:
        raise ConfigError("--region", f"bad level in {spec!r}") from exc
    if kind == "quadratic":
        return quadratic_region(sysm.P, c)
    if kind == "neural":
        if net_path is None or not Path(net_path).exists():
            raise ConfigError("--net", "a network file is needed for neural regions")
        return neural_region(MlpNet.load(net_path), c)
    raise ConfigError("--region", f"expected quadratic:C or neural:C, got {spec!r}")


def cmd_volume(args) -> int:
    cfg = load_config(args.config)
    sysm = make_system(cfg)
    net = args.net or str(_out_dir(cfg, args.config) / "net.txt")
    member = _region(args.region, sysm, net)
    out = {}
    for ref in ("doa", "domain"):
        out[ref] = estimate_volume(member, sysm, ref, args.n_mc, args.seed).to_dict()
    _print(out)
    return EXIT_OK


def cmd_plot(args) -> int:
    cfg = load_config(args.config)
    sysm = make_system(cfg)
    if sysm.dim != 2:
        raise DimensionError(f"plots need a planar system, got dimension {sysm.dim}")
    out = _out_dir(cfg, args.config, args.out)
    report_path = out / "report.json"
    if not report_path.exists():
        raise ConfigError("output", f"{report_path} not found; run the config first")
    levels = json.loads(report_path.read_text())["levels"]
    funcs = {}
    qlev = [levels[k] for k in ("c1_P", "c2_P") if levels.get(k) is not None]
    if qlev and sysm.P is not None:
        P = sysm.P
        funcs["V_P"] = (lambda X: np.einsum("ij,jk,ik->i", X, P, X), qlev)
    nlev = [levels[k] for k in ("c1_V", "c2_V") if levels.get(k) is not None]
    if nlev and (out / "net.txt").exists():
        net = MlpNet.load(out / "net.txt")
        funcs["W_N"] = (net.forward, nlev)
    curves = export_contours(funcs, sysm.domain, out / "contours.csv", out / "contours.svg",
                             resolution=args.resolution)
    _print({"csv": str(out / "contours.csv"), "svg": str(out / "contours.svg"),
            "curves": {k: {str(lv): len(p) for lv, p in v.items()} for k, v in curves.items()}})
    return EXIT_OK


def _prover_flags(p) -> None:
    p.add_argument("--delta", type=float, default=None, help="premise relaxation")
    p.add_argument("--min-width", type=float, default=None, help="smallest box width")
    p.add_argument("--budget", type=int, default=None, help="maximum number of boxes")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roa", description="Verified regions of attraction.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the stages of a configuration")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=None)
    r.add_argument("--resume", action="store_true")
    r.add_argument("--out", default=None)
    _prover_flags(r)
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("verify-net", help="verify the levels of a trained network")
    v.add_argument("system")
    v.add_argument("net")
    v.add_argument("--target", type=float, required=True)
    v.add_argument("--tol", type=float, default=1e-3)
    v.add_argument("--jobs", type=int, default=1)
    _prover_flags(v)
    v.set_defaults(fn=cmd_verify_net)

    m = sub.add_parser("volume", help="Monte Carlo volume of a certified region")
    m.add_argument("config")
    m.add_argument("--region", required=True)
    m.add_argument("--net", default=None)
    m.add_argument("--n-mc", type=int, default=100_000)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(fn=cmd_volume)

    g = sub.add_parser("plot", help="contour CSV and SVG of the certified level sets")
    g.add_argument("config")
    g.add_argument("--out", default=None)
    g.add_argument("--resolution", type=int, default=400)
    g.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DimensionError, DegenerateReference, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoLevel as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    except ResourceExhausted as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
