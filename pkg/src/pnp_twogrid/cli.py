"""Command-line experiment runner.

    pnp-twogrid run CONFIG [--out PATH] [--heavy] [--probes]
    pnp-twogrid compare A.csv B.csv [...]

Config files are ``key = value`` lines with ``#`` comments::

    method = tg3              # fem, tg1, tg2, tg3 or tg4
    resolutions = 2:4, 4:16   # H_inverse:h_inverse pairs; plain h_inverse for fem
    stop_tolerance = 1e-5
    rel_tolerance = 1e-10
    output = tg3.csv
    emit_probes = false
    parallel = false

Exit codes: 0 success, 1 solver failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .linalg import SolverConfig, SolverError
from .mesh import build_unit_cube_mesh
from .pnp import ConvergenceError, GummelConfig, gummel_solve, run_algorithm
from .verification import (
    PROBE_METHODS,
    ProbeFailure,
    check_probe_rows,
    compute_errors,
    probe_level,
    source_terms,
)

logger = logging.getLogger(__name__)

METHODS = ("fem", "tg1", "tg2", "tg3", "tg4")
CSV_FIELDS = [
    "method",
    "H",
    "h",
    "l2_p1",
    "l2_p2",
    "h1_phi",
    "h1_p1",
    "h1_p2",
    "order_h1_phi",
    "wall_seconds",
    "outer_iters",
]
LIGHT_LIMIT = 16


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    method: str
    resolutions: list[tuple[int | None, int]]
    stop_tolerance: float = 1e-5
    rel_tolerance: float = 1e-10
    output: Path | None = None
    emit_probes: bool = False
    parallel: bool = False


@dataclass
class ConvergenceRecord:
    method: str
    H: Fraction | None
    h: Fraction
    l2_p1: float
    l2_p2: float
    h1_phi: float
    h1_p1: float
    h1_p2: float
    order_h1_phi: float | None = None
    wall_seconds: float = 0.0
    outer_iters: int = 0
    inner_iters: int = field(default=0, compare=False)

    def to_row(self) -> dict[str, str]:
        def num(x):
            return "" if x is None else f"{x:.5e}"

        return {
            "method": self.method,
            "H": "" if self.H is None else str(self.H),
            "h": str(self.h),
            "l2_p1": num(self.l2_p1),
            "l2_p2": num(self.l2_p2),
            "h1_phi": num(self.h1_phi),
            "h1_p1": num(self.h1_p1),
            "h1_p2": num(self.h1_p2),
            "order_h1_phi": "" if self.order_h1_phi is None else f"{self.order_h1_phi:.4f}",
            "wall_seconds": f"{self.wall_seconds:.4f}",
            "outer_iters": str(self.outer_iters),
        }

    @classmethod
    def from_row(cls, row: dict[str, str]) -> "ConvergenceRecord":
        def opt(s, conv):
            return None if s is None or s.strip() == "" else conv(s)

        return cls(
            method=row["method"],
            H=opt(row["H"], Fraction),
            h=Fraction(row["h"]),
            l2_p1=float(row["l2_p1"]),
            l2_p2=float(row["l2_p2"]),
            h1_phi=float(row["h1_phi"]),
            h1_p1=float(row["h1_p1"]),
            h1_p2=float(row["h1_p2"]),
            order_h1_phi=opt(row.get("order_h1_phi"), float),
            wall_seconds=float(row["wall_seconds"]),
            outer_iters=int(row["outer_iters"]),
        )


# -- config ------------------------------------------------------------------


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_resolutions(text: str, method: str) -> list[tuple[int | None, int]]:
    pairs = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        try:
            if ":" in item:
                H, h = (int(v) for v in item.split(":"))
            else:
                H, h = None, int(item)
        except ValueError:
            raise ConfigError(f"bad resolution entry {item!r}") from None
        if h < 1 or (H is not None and H < 1):
            raise ConfigError(f"resolutions must be positive: {item!r}")
        if method == "fem":
            H = None
        elif H is None:
            raise ConfigError(f"two-grid method {method} needs H_inverse:h_inverse, got {item!r}")
        elif h % H:
            raise ConfigError(
                f"meshes {H}:{h} are not nested; h_inverse must be a multiple of H_inverse"
            )
        pairs.append((H, h))
    if not pairs:
        raise ConfigError("resolutions list is empty")
    return pairs


def parse_config(text: str, base: Path | None = None) -> ExperimentConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lower()] = value
    known = {
        "method",
        "resolutions",
        "stop_tolerance",
        "rel_tolerance",
        "output",
        "emit_probes",
        "parallel",
    }
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    method = values.get("method", "").lower()
    if method not in METHODS:
        raise ConfigError(f"method must be one of {', '.join(METHODS)}")
    if "resolutions" not in values:
        raise ConfigError("missing 'resolutions'")
    try:
        stop = float(values.get("stop_tolerance", 1e-5))
        rel = float(values.get("rel_tolerance", 1e-10))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not (stop > 0 and rel > 0):
        raise ConfigError("tolerances must be positive")
    output = values.get("output")
    out_path = None
    if output:
        out_path = Path(output)
        if base is not None and not out_path.is_absolute():
            out_path = base / out_path
    return ExperimentConfig(
        method=method,
        resolutions=_parse_resolutions(values["resolutions"], method),
        stop_tolerance=stop,
        rel_tolerance=rel,
        output=out_path,
        emit_probes=_parse_bool(values.get("emit_probes", "false")),
        parallel=_parse_bool(values.get("parallel", "false")),
    )


# -- running -----------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, probes: bool = False):
    """Run every resolution pair; returns (records, probe rows)."""
    sources = source_terms()
    gcfg = GummelConfig(stop_tolerance=cfg.stop_tolerance)
    scfg = SolverConfig(rel_tolerance=cfg.rel_tolerance)
    records: list[ConvergenceRecord] = []
    probe_rows = []
    for H, h in cfg.resolutions:
        fine = build_unit_cube_mesh(h)
        t0 = time.perf_counter()
        if cfg.method == "fem":
            result = gummel_solve(fine, sources, gcfg, scfg)
            state, outer, inner = result.state, result.iterations, result.inner_iterations
            wall = time.perf_counter() - t0
        else:
            coarse = build_unit_cube_mesh(H)
            result = run_algorithm(cfg.method, coarse, fine, sources, gcfg, scfg, cfg.parallel)
            state, outer, inner = result.state, result.coarse_iterations, result.inner_iterations
            wall = time.perf_counter() - t0
            if probes and cfg.method in PROBE_METHODS:
                fem = gummel_solve(fine, sources, gcfg, scfg).state
                probe_rows.extend(probe_level(cfg.method, result.coarse, fem, state))
        err = compute_errors(state)
        rec = ConvergenceRecord(
            method=cfg.method,
            H=None if H is None else Fraction(1, H),
            h=Fraction(1, h),
            l2_p1=err.l2["p1"],
            l2_p2=err.l2["p2"],
            h1_phi=err.h1["phi"],
            h1_p1=err.h1["p1"],
            h1_p2=err.h1["p2"],
            wall_seconds=wall,
            outer_iters=outer,
            inner_iters=inner,
        )
        if records:
            prev = records[-1]
            if prev.h != rec.h and rec.h1_phi > 0:
                rec.order_h1_phi = math.log(prev.h1_phi / rec.h1_phi) / math.log(prev.h / rec.h)
        records.append(rec)
        logger.info("%s H=%s h=%s done in %.2fs", cfg.method, rec.H, rec.h, wall)
    return records, probe_rows


def write_csv(records, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.to_row())


def read_csv(path: Path) -> list[ConvergenceRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_FIELDS:
            raise ConfigError(f"{path}: unexpected CSV header {reader.fieldnames}")
        return [ConvergenceRecord.from_row(row) for row in reader]


def _markdown(headers, rows) -> str:
    cells = [list(map(str, headers))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]

    def line(r):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |"

    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(cells[0]), sep] + [line(r) for r in cells[1:]])


def _e(x: float) -> str:
    return f"{x:.2E}"


def format_records(records) -> str:
    if records and records[0].method == "fem":
        headers = ["h", "L2 p1", "L2 p2", "H1 phi", "H1 p1", "H1 p2", "order", "CPU(S)"]
        rows = [
            [r.h, _e(r.l2_p1), _e(r.l2_p2), _e(r.h1_phi), _e(r.h1_p1), _e(r.h1_p2),
             "" if r.order_h1_phi is None else f"{r.order_h1_phi:.2f}", f"{r.wall_seconds:.2f}"]
            for r in records
        ]
    else:
        headers = ["H", "h", "H1 phi", "H1 p1", "H1 p2", "order", "CPU(S)"]
        rows = [
            [r.H, r.h, _e(r.h1_phi), _e(r.h1_p1), _e(r.h1_p2),
             "" if r.order_h1_phi is None else f"{r.order_h1_phi:.2f}", f"{r.wall_seconds:.2f}"]
            for r in records
        ]
    return _markdown(headers, rows)


def format_probes(rows) -> str:
    return _markdown(
        ["method", "H", "h", "quantity", "lhs", "rhs", "ratio"],
        [
            [r.method, Fraction(r.H).limit_denominator(), Fraction(r.h).limit_denominator(),
             r.quantity, f"{r.lhs:.3e}", f"{r.rhs:.3e}", f"{r.ratio:.3f}"]
            for r in rows
        ],
    )


def compare_records(tables: list[tuple[str, list[ConvergenceRecord]]], threshold: float = 0.25):
    """Side-by-side comparison against the first table (or the ``fem`` one).

    Returns ``(markdown, warnings)``.
    """
    ref_idx = next((i for i, (_, recs) in enumerate(tables) if recs and recs[0].method == "fem"), 0)
    _, ref_recs = tables[ref_idx]
    ref_by_h = {}
    for r in ref_recs:
        ref_by_h.setdefault(r.h, r)
    warnings = []
    rows = []
    for name, recs in tables:
        for r in recs:
            ref = ref_by_h.get(r.h)
            if ref is None:
                warnings.append(f"{name}: no reference row at h={r.h}")
                continue
            ratios = [r.h1_phi / ref.h1_phi, r.h1_p1 / ref.h1_p1, r.h1_p2 / ref.h1_p2]
            time_ratio = r.wall_seconds / ref.wall_seconds if ref.wall_seconds > 0 else math.nan
            flag = "EXCEEDS" if any(x > 1.0 + threshold for x in ratios) else ""
            if flag:
                warnings.append(
                    f"{name} ({r.method}) at H={r.H}, h={r.h}: H1 error more than "
                    f"{threshold:.0%} above {ref.method}"
                )
            rows.append(
                [r.method, "" if r.H is None else r.H, r.h, _e(r.h1_phi), _e(r.h1_p1), _e(r.h1_p2)]
                + [f"{x:.3f}" for x in ratios]
                + [f"{time_ratio:.3f}", flag]
            )
    ref = ref_recs[0].method if ref_recs else "ref"
    headers = ["method", "H", "h", "H1 phi", "H1 p1", "H1 p2",
               f"phi/{ref}", f"p1/{ref}", f"p2/{ref}", f"time/{ref}", "flag"]
    return _markdown(headers, rows), warnings


# -- entry point -------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnp-twogrid", description="Two-grid PNP convergence experiments."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a convergence study from a config file")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--out", type=Path, help="CSV output path (overrides config)")
    run_p.add_argument("--heavy", action="store_true", help=f"allow h_inverse > {LIGHT_LIMIT}")
    run_p.add_argument("--probes", action="store_true", help="also evaluate estimate probes")
    cmp_p = sub.add_parser("compare", help="compare result CSVs")
    cmp_p.add_argument("csv", nargs="+", type=Path)
    cmp_p.add_argument("--out", type=Path, help="write the Markdown table here")
    return parser


def _usage_error(msg: str) -> int:
    print(f"pnp-twogrid: error: {msg}", file=sys.stderr)
    return 2


def _cmd_run(args) -> int:
    try:
        cfg = parse_config(args.config.read_text(), base=args.config.parent)
    except OSError as exc:
        return _usage_error(f"cannot read config: {exc}")
    except ConfigError as exc:
        return _usage_error(f"{args.config}: {exc}")
    if args.out is not None:
        cfg.output = args.out
    if cfg.output is None:
        return _usage_error("no output path (set 'output' in the config or pass --out)")
    heavy = [h for _, h in cfg.resolutions if h > LIGHT_LIMIT]
    if heavy and not args.heavy:
        return _usage_error(f"h_inverse {max(heavy)} exceeds {LIGHT_LIMIT}; pass --heavy to run it")
    probes = args.probes or cfg.emit_probes
    try:
        records, probe_rows = run_experiment(cfg, probes=probes)
    except (SolverError, ConvergenceError) as exc:
        print(f"pnp-twogrid: solver failure: {exc}", file=sys.stderr)
        return 1
    write_csv(records, cfg.output)
    print(format_records(records))
    if probe_rows:
        print()
        print(format_probes(probe_rows))
        try:
            check_probe_rows(probe_rows, 100.0, 3.0)
        except ProbeFailure as exc:
            print(f"probe check: {exc}", file=sys.stderr)
    return 0


def _cmd_compare(args) -> int:
    if len(args.csv) < 2:
        return _usage_error("compare needs at least two CSV files")
    tables = []
    try:
        for path in args.csv:
            tables.append((str(path), read_csv(path)))
    except OSError as exc:
        return _usage_error(f"cannot read CSV: {exc}")
    except (ConfigError, KeyError, ValueError) as exc:
        return _usage_error(f"malformed CSV: {exc}")
    table, warnings = compare_records(tables)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(table)
    if args.out is not None:
        args.out.write_text(table + "\n")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_compare(args)


if __name__ == "__main__":
    sys.exit(main())
