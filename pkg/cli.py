"""
Batch efficiency evaluation over a CSV of production units.

    python cli.py eval --inputs 2 --outputs 1 --tech vrs --p=-inf --p 1 units.csv
    python cli.py dual --inputs 2 --outputs 1 --p 0 --direction unit units.csv
    python cli.py classify --inputs 2 --outputs 1 --tech fdh units.csv

The CSV header is `id,x1..xm,y1..yn` with nonnegative quantities; inputs are
negated on load. Reports go to stdout (or --out) as JSON or CSV, one row per
(unit, p), in dataset order.
"""

import argparse
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from dual import DualResult, NormalizationRule, dual_value
from errors import (
    ConfigurationError,
    ConvexityRequiredError,
    DatasetParseError,
    DimensionMismatchError,
    DomainError,
    InfeasibleError,
    NetputEffError,
    UnsupportedRegimeError,
)
from gmean import PMeanDirectional, PParameter
from oracle import GridSpec, fdh_closed_form, grid_search
from primal import EvalResult, directional_distance, evaluate_p, measure_name
from technology import Direction, Fdh, HRep, NetputVector, StatusKind, Technology, VrsHull, classify

load_dotenv()

logger = logging.getLogger("netput_eff")

LOG_LEVEL = os.getenv("NETPUT_EFF_LOG_LEVEL", "INFO").upper()
TECHNOLOGIES = ("vrs", "fdh", "hrep")
FORMATS = ("json", "csv")
ZERO_SCORE_TOL = 1e-7

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSUPPORTED = 2
UNSUPPORTED_MARKERS = ("unsupported", "convexity_required")


# ---------------- CONFIG ---------------- #

def configured_threads() -> int:
    raw = os.getenv("NETPUT_EFF_THREADS")
    if raw is None or raw.strip() == "":
        return max(os.cpu_count() or 1, 1)
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"NETPUT_EFF_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigurationError(f"NETPUT_EFF_THREADS must be at least 1, got {value}")
    return value


def configured_tolerance() -> float:
    raw = os.getenv("NETPUT_EFF_TOL", "1e-6")
    try:
        value = float(raw)
    except ValueError:
        raise ConfigurationError(f"NETPUT_EFF_TOL must be a number, got {raw!r}")
    if not (value > 0 and math.isfinite(value)):
        raise ConfigurationError(f"NETPUT_EFF_TOL must be positive, got {raw!r}")
    return value


@dataclass
class RunConfig:
    technology: str = "vrs"
    hrep_path: Optional[str] = None
    p_list: List[PParameter] = field(default_factory=lambda: [PParameter.finite(1.0)])
    direction: str = "observed"
    tolerance: float = 1e-6
    dual: bool = False
    output_format: str = "json"
    out: Optional[str] = None
    threads: int = 1
    resolution: int = 51

    def __post_init__(self):
        if self.technology.startswith("hrep:"):
            self.technology, self.hrep_path = "hrep", self.technology[len("hrep:"):]
        if self.technology not in TECHNOLOGIES:
            raise ConfigurationError(f"Unknown technology {self.technology!r}; use vrs, fdh or hrep:<path>")
        if self.technology == "hrep" and not self.hrep_path:
            raise ConfigurationError("hrep technology needs a constraint file (--tech hrep:<path> or --hrep)")
        self.p_list = [PParameter.of(p) for p in self.p_list]
        if not self.p_list:
            raise ConfigurationError("at least one --p value is required")
        if not (self.tolerance > 0 and math.isfinite(self.tolerance)):
            raise ConfigurationError(f"tolerance must be positive, got {self.tolerance}")
        if self.output_format not in FORMATS:
            raise ConfigurationError(f"Unknown format {self.output_format!r}")
        if not (self.direction in ("observed", "unit") or self.direction.startswith("custom:")):
            raise ConfigurationError(f"Unknown direction {self.direction!r}; use observed, unit or custom:<path>")
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1")


# ---------------- DATASET ---------------- #

@dataclass
class Unit:
    id: str
    inputs: np.ndarray
    outputs: np.ndarray

    @property
    def netput(self) -> NetputVector:
        return NetputVector.from_quantities(self.inputs, self.outputs)


@dataclass
class Dataset:
    units: List[Unit]
    m: int
    n: int

    @property
    def d(self) -> int:
        return self.m + self.n

    def netputs(self) -> np.ndarray:
        return np.array([np.asarray(u.netput) for u in self.units])


def _missing(value: Any) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value)) or str(value).strip() == ""


def _parse_quantity(value: Any, column: str, line: int) -> float:
    try:
        number = float(str(value).strip())
    except ValueError:
        raise DatasetParseError(f"column {column}: {value!r} is not a number", line)
    if not math.isfinite(number) or number < 0:
        raise DatasetParseError(f"column {column}: quantities must be finite and nonnegative, got {value!r}", line)
    return number


def load_dataset(path: str, m: int, n: int) -> Dataset:
    """Read `id,x1..xm,y1..yn` rows; line numbers in errors are 1-based file lines."""
    if m < 0 or n < 0 or m + n == 0:
        raise ConfigurationError(f"--inputs/--outputs must be nonnegative with a positive sum, got {m}, {n}")
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                            skip_blank_lines=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DatasetParseError("dataset is empty", 1)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise DatasetParseError(f"inconsistent number of fields ({e})", int(match.group(1)) if match else None)

    header = [str(c).strip() for c in frame.iloc[0].tolist()]
    if len(header) != 1 + m + n:
        raise ConfigurationError(
            f"header has {len(header)} columns, --inputs {m} --outputs {n} expects {1 + m + n}"
        )

    units, seen = [], {}
    for i in range(1, len(frame)):
        line = i + 1
        cells = frame.iloc[i].tolist()
        if all(_missing(c) for c in cells):
            continue
        if any(_missing(c) for c in cells):
            raise DatasetParseError(f"expected {1 + m + n} fields", line)
        unit_id = str(cells[0]).strip()
        if unit_id in seen:
            raise DatasetParseError(f"duplicate id {unit_id!r} (first on line {seen[unit_id]})", line)
        seen[unit_id] = line
        values = [_parse_quantity(c, header[j + 1], line) for j, c in enumerate(cells[1:])]
        units.append(Unit(unit_id, np.array(values[:m]), np.array(values[m:])))

    if not units:
        raise DatasetParseError("dataset has no units", 2)
    logger.debug("Loaded %d units (m=%d, n=%d) from %s", len(units), m, n, path)
    return Dataset(units, m, n)


def _numbers(text: str, line: int) -> List[float]:
    try:
        return [float(t) for t in re.split(r"[,\s]+", text.strip()) if t]
    except ValueError:
        raise DatasetParseError(f"non-numeric entry in {text.strip()!r}", line)


def load_hrep(path: str, d: int) -> HRep:
    """One constraint `a1 a2 ... ad <= b` per line; `#` starts a comment."""
    normals, rhs = [], []
    with open(path, "r", encoding="utf-8") as f:
        for line, raw in enumerate(f, 1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if text.count("<=") != 1:
                raise DatasetParseError("expected one '<=' per constraint", line)
            lhs, right = text.split("<=")
            a = _numbers(lhs, line)
            b = _numbers(right, line)
            if len(a) != d:
                raise DimensionMismatchError(f"{path} line {line}: {len(a)} coefficients, dataset has {d} coordinates")
            if len(b) != 1:
                raise DatasetParseError("right-hand side must be one number", line)
            normals.append(a)
            rhs.append(b[0])
    if not normals:
        raise DatasetParseError(f"{path} has no constraints")
    return HRep(normals, rhs)


def load_direction(path: str, d: int) -> Direction:
    with open(path, "r", encoding="utf-8") as f:
        values = _numbers(f.read(), 1)
    if len(values) != d:
        raise DimensionMismatchError(f"direction file has {len(values)} entries, dataset has {d} coordinates")
    return Direction(values)


# ---------------- RUN CONTEXT ---------------- #

class RunContext:
    """Technology and direction policy shared by the per-unit workers."""

    def __init__(self, config: RunConfig, dataset: Dataset):
        self.config = config
        self.dataset = dataset
        self.tech = self._technology()
        self._custom = None
        if config.direction.startswith("custom:"):
            self._custom = load_direction(config.direction[len("custom:"):], dataset.d)

    def _technology(self) -> Technology:
        if self.config.technology == "vrs":
            return VrsHull(self.dataset.netputs())
        if self.config.technology == "fdh":
            return Fdh(self.dataset.netputs())
        return load_hrep(self.config.hrep_path, self.dataset.d)

    def direction(self, unit: Unit) -> Direction:
        if self._custom is not None:
            return self._custom
        if self.config.direction == "unit":
            return Direction.unit(self.dataset.d)
        z = np.asarray(unit.netput)
        if np.any(z == 0):
            logger.warning("Unit %s has zero coordinates %s; they are left out of the expansion",
                           unit.id, np.flatnonzero(z == 0).tolist())
        return Direction.observed(z)


@dataclass
class Report:
    command: str
    technology: str
    rows: List[Dict[str, Any]]

    @property
    def unsupported(self) -> int:
        return sum(1 for r in self.rows
                   if r.get("status") in UNSUPPORTED_MARKERS or r.get("dual_status") in UNSUPPORTED_MARKERS)

    @property
    def exit_code(self) -> int:
        return EXIT_UNSUPPORTED if self.unsupported else EXIT_OK


def row_marker(exc: NetputEffError) -> str:
    if isinstance(exc, ConvexityRequiredError):
        return "convexity_required"
    if isinstance(exc, UnsupportedRegimeError):
        return "unsupported"
    if isinstance(exc, InfeasibleError):
        return "infeasible"
    return "undefined"


ROW_ERRORS = (UnsupportedRegimeError, InfeasibleError, DomainError)


def _run(context: RunContext, command: str, per_unit: Callable[[Unit], List[Dict[str, Any]]]) -> Report:
    units = context.dataset.units
    with ThreadPoolExecutor(max_workers=min(context.config.threads, len(units))) as pool:
        per_unit_rows = list(pool.map(per_unit, units))
    rows = [row for unit_rows in per_unit_rows for row in unit_rows]
    return Report(command, context.config.technology, rows)


# ---------------- ROWS ---------------- #

def eval_row(unit_id: str, p: PParameter, result: EvalResult) -> Dict[str, Any]:
    if result.status is not None:
        status = result.status.kind.value
    else:
        status = result.diagnostics.get("regime", "")
    return {
        "id": unit_id,
        "p": str(p),
        "measure": result.measure,
        "score": result.score,
        "status": status,
        "delta_star": result.delta_star,
        "projection": None if result.projection is None else np.asarray(result.projection),
    }


def dual_columns(result: Optional[DualResult], p: PParameter, status: str, error: str = "") -> Dict[str, Any]:
    row = {
        "criterion": NormalizationRule.criterion(p),
        "normalization": NormalizationRule.for_p(p).kind.value,
        "dual_status": status,
        "dual_value": math.nan,
        "dual_gap": math.nan,
        "attained": None,
        "normalization_residual": math.nan,
        "primal_score": math.nan,
        "prices": None,
    }
    if result is not None:
        row.update({
            "dual_value": result.dual_value,
            "dual_gap": result.gap,
            "attained": result.attained,
            "normalization_residual": result.normalization_residual,
            "primal_score": result.primal_score,
            "prices": result.prices,
        })
    if error:
        row["dual_error"] = error
    return row


def _dual_for(context: RunContext, unit: Unit, g: Direction, p: PParameter) -> Dict[str, Any]:
    try:
        result = dual_value(context.tech, unit.netput, g, p, tol=context.config.tolerance)
    except ROW_ERRORS as e:
        logger.debug("Unit %s, p=%s: %s", unit.id, p, e)
        return dual_columns(None, p, row_marker(e), str(e))
    return dual_columns(result, p, "ok")


# ---------------- COMMANDS ---------------- #

def cmd_eval(config: RunConfig, dataset: Dataset) -> Report:
    """D_(p) score, optimal expansion and projection for every unit and p (plus duals with config.dual)."""
    context = RunContext(config, dataset)

    def per_unit(unit: Unit) -> List[Dict[str, Any]]:
        g = context.direction(unit)
        rows = []
        for p in config.p_list:
            try:
                row = eval_row(unit.id, p, evaluate_p(context.tech, unit.netput, g, p, tol=config.tolerance))
            except ROW_ERRORS as e:
                logger.debug("Unit %s, p=%s: %s", unit.id, p, e)
                row = {"id": unit.id, "p": str(p), "measure": measure_name(p), "score": math.nan,
                       "status": row_marker(e), "error": str(e)}
            if config.dual:
                row.update(_dual_for(context, unit, g, p))
            rows.append(row)
        return rows

    return _run(context, "eval", per_unit)


def cmd_dual(config: RunConfig, dataset: Dataset) -> Report:
    """Optimal normalized shadow prices and duality gaps for every unit and p."""
    context = RunContext(config, dataset)

    def per_unit(unit: Unit) -> List[Dict[str, Any]]:
        g = context.direction(unit)
        rows = []
        for p in config.p_list:
            row = {"id": unit.id, "p": str(p)}
            row.update(_dual_for(context, unit, g, p))
            row["status"] = row.pop("dual_status")
            rows.append(row)
        return rows

    report = _run(context, "dual", per_unit)
    for row in report.rows:
        if row["status"] == "ok" and row["dual_gap"] > max(config.tolerance, 1e-4) * (1.0 + abs(row["dual_value"])):
            logger.warning("Unit %s, p=%s: duality gap %.3e", row["id"], row["p"], row["dual_gap"])
    return report


def cmd_classify(config: RunConfig, dataset: Dataset) -> Report:
    """Efficiency status on K_g, cross-checked against D = 0 (weak) and D_FL = 0 (strong)."""
    context = RunContext(config, dataset)

    def per_unit(unit: Unit) -> List[Dict[str, Any]]:
        g = context.direction(unit)
        z = unit.netput
        if g.is_zero:
            return [{"id": unit.id, "status": "undefined", "error": "direction has empty support"}]
        status = classify(context.tech, z, g.support)
        weak = directional_distance(context.tech, z, g, with_status=False).score
        strong = evaluate_p(context.tech, z, g, 1.0, tol=config.tolerance, with_status=False).score
        consistent = True
        if status.kind != StatusKind.INFEASIBLE:
            weak_zero = abs(weak) <= ZERO_SCORE_TOL
            # without convexity a zero D only rules out joint improvement
            if context.tech.is_convex:
                weak_ok = weak_zero == status.at_least_weakly_efficient
            else:
                weak_ok = weak_zero or not status.at_least_weakly_efficient
            consistent = weak_ok and (abs(strong) <= ZERO_SCORE_TOL) == status.is_efficient
        if not consistent:
            logger.warning("Unit %s: status %s disagrees with scores D=%.3e, D_FL=%.3e",
                           unit.id, status, weak, strong)
        return [{
            "id": unit.id,
            "status": status.kind.value,
            "index_set": list(status.index_set),
            "blocked": list(status.witness),
            "directional_distance": weak,
            "directional_fare_lovell": strong,
            "consistent": consistent,
        }]

    return _run(context, "classify", per_unit)


def cmd_oracle(config: RunConfig, dataset: Dataset) -> Report:
    """Grid-search sandwich and the free disposal hull closed form next to the solver score."""
    context = RunContext(config, dataset)
    points = dataset.netputs()

    def per_unit(unit: Unit) -> List[Dict[str, Any]]:
        g = context.direction(unit)
        rows = []
        for p in config.p_list:
            row = {"id": unit.id, "p": str(p), "status": "ok"}
            try:
                row["score"] = evaluate_p(context.tech, unit.netput, g, p, tol=config.tolerance,
                                          with_status=False).score
                grid = grid_search(context.tech, unit.netput, g, PMeanDirectional(p, g),
                                   GridSpec(resolution=config.resolution))
                row["grid_lower"], row["grid_upper"] = grid.lower, grid.upper
            except ROW_ERRORS as e:
                row.update({"status": row_marker(e), "error": str(e)})
            if config.technology == "fdh":
                row["closed_form"] = fdh_closed_form(points, unit.netput, g, p)
            rows.append(row)
        return rows

    return _run(context, "oracle", per_unit)


COMMANDS = {"eval": cmd_eval, "dual": cmd_dual, "classify": cmd_classify, "oracle": cmd_oracle}


# ---------------- OUTPUT ---------------- #

def json_value(value: Any) -> Any:
    if isinstance(value, (np.ndarray, list, tuple)):
        return [json_value(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _flatten(row: Dict[str, Any], widths: Dict[str, int]) -> Dict[str, str]:
    out = {}
    for key, value in row.items():
        if key in widths:
            values = [] if value is None else list(value)
            for j in range(widths[key]):
                out[f"{key}_{j + 1}"] = _csv_cell(values[j]) if j < len(values) else ""
        else:
            out[key] = _csv_cell(value)
    return out


def render_report(report: Report, fmt: str) -> str:
    if fmt == "json":
        payload = {
            "command": report.command,
            "technology": report.technology,
            "rows": [{k: json_value(v) for k, v in row.items()} for row in report.rows],
        }
        return json.dumps(payload, indent=2) + "\n"
    widths: Dict[str, int] = {}
    for row in report.rows:
        for key, value in row.items():
            if isinstance(value, (np.ndarray, list)):
                widths[key] = max(widths.get(key, 0), len(value))
    frame = pd.DataFrame([_flatten(row, widths) for row in report.rows], dtype=str).fillna("")
    return frame.to_csv(index=False)


def read_report_csv(path: str) -> pd.DataFrame:
    """Load a CSV report back with exact float round-tripping."""
    return pd.read_csv(path, float_precision="round_trip")


def write_report(report: Report, fmt: str, out: Optional[str] = None) -> None:
    text = render_report(report, fmt)
    if out:
        with open(out, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        print(f"📁 Report written to {out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


# ---------------- ENTRY POINT ---------------- #

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("dataset", help="CSV file with header id,x1..xm,y1..yn")
    common.add_argument("--inputs", type=int, required=True, help="number of input columns m")
    common.add_argument("--outputs", type=int, required=True, help="number of output columns n")
    common.add_argument("--tech", default="vrs", help="vrs, fdh or hrep:<path> (default: vrs)")
    common.add_argument("--hrep", help="constraint file for --tech hrep")
    common.add_argument("--p", action="append", dest="p_list", metavar="P",
                        help="p value: -inf, a real literal or inf; repeatable (default: 1)")
    common.add_argument("--direction", default="observed", help="observed, unit or custom:<path>")
    common.add_argument("--tol", type=float, default=None, help="solver tolerance (default: $NETPUT_EFF_TOL or 1e-6)")
    common.add_argument("--format", default="json", choices=FORMATS)
    common.add_argument("--out", help="write the report here instead of stdout")

    parser = argparse.ArgumentParser(description="Generalized directional Fare-Lovell efficiency scores")
    sub = parser.add_subparsers(dest="command", metavar="{eval,dual,classify}")
    sub.required = True
    eval_parser = sub.add_parser("eval", parents=[common], help="distance scores per unit and p")
    eval_parser.add_argument("--dual", action="store_true", help="append dual prices and gaps")
    sub.add_parser("dual", parents=[common], help="dual prices and duality gaps")
    sub.add_parser("classify", parents=[common], help="efficiency status on the direction support")
    oracle_parser = sub.add_parser("oracle", parents=[common])
    oracle_parser.add_argument("--resolution", type=int, default=51)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    technology = args.tech
    if technology == "hrep" and args.hrep:
        technology = f"hrep:{args.hrep}"
    return RunConfig(
        technology=technology,
        p_list=[PParameter.parse(t) for t in (args.p_list or ["1"])],
        direction=args.direction,
        tolerance=args.tol if args.tol is not None else configured_tolerance(),
        dual=getattr(args, "dual", False) or args.command == "dual",
        output_format=args.format,
        out=args.out,
        threads=configured_threads(),
        resolution=getattr(args, "resolution", 51),
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=getattr(logging, LOG_LEVEL, logging.INFO), format="[%(levelname)s] %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        dataset = load_dataset(args.dataset, args.inputs, args.outputs)
        report = COMMANDS[args.command](config, dataset)
        write_report(report, config.output_format, config.out)
    except (NetputEffError, OSError) as e:
        logger.error(str(e))
        return EXIT_ERROR

    print(f"✅ {args.command}: {len(dataset.units)} units, {len(report.rows)} rows ({config.technology})",
          file=sys.stderr)
    if report.unsupported:
        print(f"⚠️  {report.unsupported} rows hit unsupported regimes", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
