"""Command-line front end: ``build``, ``verify``, ``ratio``, ``demo``, ``scan``."""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

from gmpy2 import mpq

from . import io as wio
from .demo import QuadratureError, dualcp_ratio, gaussian_floor, run_demo
from .measure import Construction, ConstructionParams, PrecisionExhausted, construct
from .triadic import parse_rational
from .verify import ALL_CHECKS, check_mwcompare, check_term_bounds, run_checks

log = logging.getLogger("weakhilbert")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_PRECISION, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4

SCAN_COLUMNS = [
    "k", "depth", "pieces", "dualcp_ratio", "lower_bound_ratio", "max_Mw_over_w",
    "min_a2_over_w", "max_a1_over_w", "max_a3_over_w", "max_a5_over_w",
    "cuperez_ratio", "theorem_ratio", "wall_seconds",
]

FLOOR_RESOLUTION = 512


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    ks: List[int]
    depth: int = 2
    precision: int = 128
    tolerance: Optional[mpq] = None
    samples: int = 3
    grid: int = 8
    quad_order: int = 16
    base_support: str = "recursive"
    floor_c: Optional[mpq] = None
    floor_window: Optional[mpq] = None
    seed: int = 0
    threads: Optional[int] = None
    out: Optional[str] = None
    report: Optional[str] = None
    checks: Sequence[str] = ALL_CHECKS
    quiet: bool = False
    timing: bool = False
    weight: Optional[str] = None

    def params(self, k: int) -> ConstructionParams:
        return ConstructionParams(k, self.depth, self.precision, self.tolerance, self.base_support)


def parse_k(text: str) -> List[int]:
    """``INT`` or ``A..B`` (inclusive)."""
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise ConfigError(f"--k expects INT or A..B, got {text!r}")
    if hi < lo:
        raise ConfigError(f"empty k range {text!r}")
    if lo < 2:
        raise ConfigError("k must be >= 2")
    return list(range(lo, hi + 1))


def _rational(text: str) -> mpq:
    try:
        return parse_rational(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", default="4", help="INT or A..B")
    common.add_argument("--depth", type=int, default=2)
    common.add_argument("--precision-bits", type=int, default=128)
    common.add_argument("--tolerance", type=_rational, default=None)
    common.add_argument("--samples", type=int, default=3)
    common.add_argument("--grid", type=int, default=8, help="cells per support piece")
    common.add_argument("--quad-order", type=int, default=16)
    common.add_argument("--base-support", choices=("literal", "recursive"), default="recursive")
    common.add_argument("--floor-c", type=_rational, default=None)
    common.add_argument("--floor-window", type=_rational, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--report", default=None)
    common.add_argument("--checks", default=",".join(ALL_CHECKS))
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--timing", action="store_true", help="fill the wall_seconds column")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="weakhilbert", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="build a weight and its sign table")
    v = sub.add_parser("verify", parents=[common], help="run checks on a weight file")
    v.add_argument("weight", help="weight file written by build")
    sub.add_parser("ratio", parents=[common], help="scan row for a single k")
    sub.add_parser("demo", parents=[common], help="weak-type demonstration pipeline")
    sub.add_parser("scan", parents=[common], help="one CSV row per k")
    return p


class _ArgParseExit(Exception):
    def __init__(self, code):
        self.code = code


def parse_config(argv: Sequence[str]) -> RunConfig:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        raise _ArgParseExit(exc.code)
    ks = parse_k(ns.k)
    if ns.command in ("build", "ratio", "demo") and len(ks) != 1:
        raise ConfigError(f"{ns.command} takes a single k")
    checks = [c.strip() for c in ns.checks.split(",") if c.strip()]
    unknown = sorted(set(checks) - set(ALL_CHECKS))
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; choose from {list(ALL_CHECKS)}")
    if ns.samples < 1 or ns.grid < 1 or ns.quad_order < 2:
        raise ConfigError("--samples, --grid must be >= 1 and --quad-order >= 2")
    if (ns.floor_c is None) != (ns.floor_window is None):
        raise ConfigError("--floor-c and --floor-window go together")
    if ns.floor_c is not None and (ns.floor_c <= 0 or ns.floor_window <= 0):
        raise ConfigError("floor constant and window must be positive")
    if ns.threads is not None and ns.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cfg = RunConfig(
        command=ns.command, ks=ks, depth=ns.depth, precision=ns.precision_bits,
        tolerance=ns.tolerance, samples=ns.samples, grid=ns.grid, quad_order=ns.quad_order,
        base_support=ns.base_support, floor_c=ns.floor_c, floor_window=ns.floor_window,
        seed=ns.seed, threads=ns.threads, out=ns.out, report=ns.report, checks=checks,
        quiet=ns.quiet, timing=ns.timing, weight=getattr(ns, "weight", None),
    )
    for k in ks:
        cfg.params(k)  # raises ValueError on invalid combinations
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    return cfg


# ---------------------------------------------------------------------------


class Console:
    def __init__(self, cfg: RunConfig, result_to_stdout: bool):
        self.quiet = cfg.quiet or result_to_stdout

    def progress(self, msg: str) -> None:
        if not self.quiet:
            print(msg, flush=True)


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _weight_for(c: Construction, cfg: RunConfig):
    if cfg.floor_c is None:
        return c.weight
    return gaussian_floor(c.weight, cfg.floor_c, cfg.floor_window, FLOOR_RESOLUTION)


def scan_row(cfg: RunConfig, k: int, console: Console) -> dict:
    t0 = time.perf_counter()
    c = construct(cfg.params(k))
    console.progress(f"k={k}: built {len(c.weight)} pieces")
    w = _weight_for(c, cfg)
    dual = dualcp_ratio(c, order=cfg.quad_order, samples=cfg.samples, seed=cfg.seed, w=w)
    console.progress(f"k={k}: dualcp ratio {dual.ratio:.6g}")
    _, mw = check_mwcompare(c, cfg.samples, cfg.seed)
    _, terms = check_term_bounds(c, cfg.samples, cfg.seed, cfg.precision, decomposition=False)
    console.progress(f"k={k}: term bounds over {terms['sites']} sites")
    suite = run_demo(c, cfg.grid, seed=cfg.seed, w=w)
    console.progress(f"k={k}: demo ratios {suite.cuperez.ratio:.6g} {suite.theorem.ratio:.6g}")
    row = {
        "k": k, "depth": cfg.depth, "pieces": len(c.weight),
        "dualcp_ratio": dual.ratio, "lower_bound_ratio": dual.lower_bound_ratio,
        "max_Mw_over_w": mw["max_ratio"],
        "min_a2_over_w": terms["min_a2_over_w"], "max_a1_over_w": terms["max_a1_over_w"],
        "max_a3_over_w": terms["max_a3_over_w"], "max_a5_over_w": terms["max_a5_over_w"],
        "cuperez_ratio": suite.cuperez.ratio, "theorem_ratio": suite.theorem.ratio,
        "wall_seconds": round(time.perf_counter() - t0, 3) if cfg.timing else None,
    }
    return row


def format_csv(rows: List[dict]) -> str:
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(SCAN_COLUMNS)
    for r in rows:
        wr.writerow([_fmt(r.get(col)) for col in SCAN_COLUMNS])
    return buf.getvalue()


def parse_csv(text: str) -> List[dict]:
    out = []
    for r in csv.DictReader(_io.StringIO(text)):
        row = {}
        for col in SCAN_COLUMNS:
            v = r[col]
            if v == "":
                row[col] = None
            elif col in ("k", "depth", "pieces"):
                row[col] = int(v)
            else:
                row[col] = float(v)
        out.append(row)
    return out


def run_build(cfg: RunConfig) -> int:
    console = Console(cfg, cfg.out is None)
    c = construct(cfg.params(cfg.ks[0]))
    _emit(wio.dumps(c), cfg.out)
    console.progress(f"wrote {len(c.weight)} pieces, {len(c.signs)} signs "
                     f"({c.signs.defaulted_count} defaulted) to {cfg.out}")
    return EXIT_OK


def run_verify(cfg: RunConfig) -> int:
    console = Console(cfg, cfg.report is None)
    c = wio.load(cfg.weight)
    console.progress(f"loaded k={c.params.k} depth={c.params.depth}, {len(c.weight)} pieces")
    rep = run_checks(c, cfg.checks, cfg.samples, cfg.seed, cfg.precision)
    _emit(rep.dumps() + "\n", cfg.report)
    for name in rep.checks():
        console.progress(f"{name}: {rep.status(name)}")
    status = rep.status()
    if status == "fail":
        return EXIT_FAIL
    if status == "inconclusive":
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def run_scan(cfg: RunConfig) -> int:
    console = Console(cfg, cfg.out is None)
    rows = [scan_row(cfg, k, console) for k in cfg.ks]
    _emit(format_csv(rows), cfg.out)
    return EXIT_OK


def run_demo_cmd(cfg: RunConfig) -> int:
    target = cfg.report or cfg.out
    console = Console(cfg, target is None)
    c = construct(cfg.params(cfg.ks[0]))
    w = _weight_for(c, cfg)
    suite = run_demo(c, cfg.grid, seed=cfg.seed, w=w)

    def result(r):
        ex = {k: v for k, v in r.extras.items() if k not in ("hf", "E_mask")}
        return {"t": r.t, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio, "grid": r.grid,
                "E": [list(e) for e in r.E], "extras": ex}

    doc = {
        "k": c.params.k, "depth": c.params.depth, "grid": cfg.grid, "certified": False,
        "test_function_l1": suite.test_function.l1_norm,
        "cuperez": result(suite.cuperez), "theorem": result(suite.theorem),
    }
    _emit(json.dumps(doc, indent=1) + "\n", target)
    console.progress(f"cuperez ratio {suite.cuperez.ratio:.6g}, theorem ratio {suite.theorem.ratio:.6g}")
    violations = suite.theorem.extras["pointwise_violations"]
    if violations or not suite.theorem.extras["holder_ok"]:
        print(f"pointwise or Holder check failed: {violations[:3]}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


COMMANDS = {
    "build": run_build,
    "verify": run_verify,
    "ratio": run_scan,
    "demo": run_demo_cmd,
    "scan": run_scan,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except _ArgParseExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[cfg.command](cfg)
    except PrecisionExhausted as exc:
        J = getattr(exc, "interval", None)
        print(f"error: cannot certify the sign for J={J}: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except QuadratureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (wio.WeightFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
