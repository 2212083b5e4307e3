"""Command-line frontend.

    forlion design -c config.json -o report.json [--seed N] [--key=value ...]

Exit status: 0 on success, 2 on invalid input, 3 on numerical failure
(singular designs, infeasible parameters, exhausted cubature budget).
"""

from __future__ import annotations

import argparse
import sys
import time
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import RunConfig, apply_overrides, build, load_raw, parse_value, validate
from .design import ExactDesign, design_info, log_det, relative_efficiency
from .engine import ew_forlion_optimize, forlion_optimize
from .errors import NumericalError, ValidationError
from .expectation import CubatureBudgetWarning
from .report import RunReport, approximate_block, exact_block, render
from .rounding import round_design

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
BUDGET_WARNING = "cubature_budget_exceeded"
SUBCOMMANDS = ("run", "design", "ew-design", "round", "efficiency", "info", "validate")


def parse_overrides(tokens: Sequence[str]) -> list[tuple[str, object]]:
    """``--a.b=v`` or ``--a.b v`` pairs; values are JSON literals or strings."""
    out = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ValidationError(f"unexpected argument {tok!r}", key="cli")
        body = tok[2:]
        if "=" in body:
            key, text = body.split("=", 1)
        else:
            if i + 1 >= len(tokens):
                raise ValidationError(f"option {tok!r} needs a value", key=body)
            key, text = body, tokens[i + 1]
            i += 1
        out.append((key, parse_value(text)))
        i += 1
    return out


def execute(cfg: RunConfig) -> RunReport:
    """Run the configured task (no I/O)."""
    provider = cfg.provider()
    rep = RunReport(task=cfg.task, factors=cfg.space.names)
    p = provider.p
    if cfg.task in ("design", "ew-design"):
        run = ew_forlion_optimize if cfg.task == "ew-design" else forlion_optimize
        res = run(cfg.space, provider, cfg.algorithm)
        rep.design = approximate_block(res.design)
        rep.m = res.m
        rep.det = res.det
        rep.log_det = res.log_det
        rep.convergence = bool(res.convergence)
        rep.min_diff = res.min_diff if np.isfinite(res.min_diff) else None
        rep.x_close = None if res.x_close is None else np.asarray(res.x_close).tolist()
        rep.itmax = int(res.itmax)
        rep.max_sensitivity = float(res.max_sensitivity)
    elif cfg.task == "round":
        if hasattr(provider, "prepare"):
            provider.prepare(cfg.space)
        xi = cfg.design.as_approximate() if isinstance(cfg.design, ExactDesign) else cfg.design
        rr = round_design(provider, xi, cfg.space, cfg.rounding, cfg.allocate_on, cfg.allocation)
        rep.design = exact_block(rr.exact)
        rep.m = rr.exact.points.shape[0]
        rep.det = rr.det
        rep.log_det = rr.log_det
        rep.ni = [int(n) for n in rr.exact.counts]
        rep.N = rr.exact.N
        rep.rel_efficiency = rr.relative_efficiency
    elif cfg.task == "efficiency":
        if hasattr(provider, "prepare"):
            provider.prepare(cfg.space)
        ld = log_det(design_info(provider, cfg.design))
        blk = exact_block if isinstance(cfg.design, ExactDesign) else approximate_block
        rep.design = blk(cfg.design)
        rep.m = len(cfg.design.points)
        rep.log_det = ld
        rep.det = float(np.exp(ld))
        rep.rel_efficiency = relative_efficiency(provider, cfg.design, cfg.reference, p)
    else:  # info
        F = provider.info(cfg.point[None])[0]
        rep.info = F.tolist()
        ld = log_det(F)
        rep.log_det = ld if np.isfinite(ld) else None
        rep.det = float(np.linalg.det(F))
    if getattr(provider, "budget_exceeded", False):
        rep.warnings.append(BUDGET_WARNING)
    return rep


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="forlion",
        description="D-optimal designs for generalized linear and multinomial logit models.",
        epilog="Any config entry can be overridden with --dotted.key=value (e.g. --algorithm.reltol=1e-6).",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "run": "run the task named in the config",
        "design": "locally D-optimal design",
        "ew-design": "EW D-optimal design (prior or parameter sample)",
        "round": "round an approximate design to an exact design on a grid",
        "efficiency": "relative efficiency of one design against a reference",
        "info": "Fisher information at one point",
        "validate": "check a config without running it",
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("-c", "--config", required=True, help="JSON run configuration")
        if name != "validate":
            sp.add_argument("-o", "--output", help="write the JSON report here")
            sp.add_argument("--seed", type=int, help="override the config seed")
    return ap


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    ap = _parser()
    args, extra = ap.parse_known_args(argv)

    if args.command == "validate":
        if extra:
            ap.error(f"unrecognized arguments: {' '.join(extra)}")
        try:
            diags = validate(args.config)
        except ValidationError as exc:
            _err(str(exc))
            return EXIT_INVALID
        for d in diags:
            print(f"{d.key}: {d.message}")
        if not diags:
            print("OK")
        return EXIT_OK if not diags else EXIT_INVALID

    t0 = time.perf_counter()
    try:
        overrides = parse_overrides(extra)
        if args.seed is not None:
            overrides.append(("seed", args.seed))
        if args.command != "run":
            overrides.append(("task", args.command))
        path = Path(args.config)
        raw = apply_overrides(load_raw(path), overrides)
        cfg = build(raw, path.parent)
    except ValidationError as exc:
        _err(str(exc))
        return EXIT_INVALID

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CubatureBudgetWarning)  # surfaced through the report
            rep = execute(cfg)
    except ValidationError as exc:
        _err(str(exc))
        return EXIT_INVALID
    except (NumericalError, np.linalg.LinAlgError) as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERICAL

    rep.provenance = {
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "version": __version__,
        "wall_time": round(time.perf_counter() - t0, 3),
    }
    sys.stdout.write(render(rep))
    if args.output:
        rep.write(args.output)
    if BUDGET_WARNING in rep.warnings:
        _err("cubature evaluation budget exhausted; results may be inaccurate")
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
