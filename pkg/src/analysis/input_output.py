"""Regional input-output model: demand adjustment, GDP contributions and output multipliers"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from numpy.linalg import LinAlgError, eigvals, solve

from analysis.estimators import Metric
from collectors.models import OVERALL, VoucherKind, VoucherSpec
from config.errors import ConfigurationError, NumericalError, TableValidationError
from config.settings import ADDED_VALUE_ROW, SCENARIO_FILE, SECTOR_COUNT, SECTOR_TABLE

logger = logging.getLogger(__name__)

ROUND_TRIP_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class SectorTable:
    """Leontief inverse L = (I - A)^-1 with value-added coefficients, one row/column per sector."""

    sector_names: tuple
    L: np.ndarray
    va: np.ndarray

    def __post_init__(self):
        n = len(self.sector_names)
        if self.L.shape != (n, n):
            raise TableValidationError(f"matrix is {self.L.shape[0]}x{self.L.shape[1]}, expected {n}x{n}")
        if self.va.shape != (n,):
            raise TableValidationError(f"value-added row has {self.va.size} entries, expected {n}")
        if not np.isfinite(self.L).all() or not np.isfinite(self.va).all():
            raise TableValidationError("table contains non-finite entries")
        negative = np.argwhere(self.L < 0)
        if negative.size:
            i, j = negative[0]
            raise TableValidationError(
                f"negative entry {self.L[i, j]} at ({self.sector_names[i]}, {self.sector_names[j]})"
            )
        low = np.flatnonzero(np.diag(self.L) < 1.0)
        if low.size:
            i = low[0]
            raise TableValidationError(
                f"not a Leontief inverse: diagonal entry {self.L[i, i]} < 1 for {self.sector_names[i]} "
                "(technical coefficients can be converted with leontief_inverse)"
            )
        bad_va = np.flatnonzero((self.va <= 0) | (self.va > 1))
        if bad_va.size:
            i = bad_va[0]
            raise TableValidationError(f"value-added coefficient {self.va[i]} for {self.sector_names[i]} outside (0, 1]")

    @property
    def size(self) -> int:
        """Number of sectors"""
        return len(self.sector_names)

    def output_multipliers(self) -> pd.Series:
        """GDP generated per unit of final demand landing in each sector (va . L[:, j])."""
        return pd.Series(self.va @ self.L, index=list(self.sector_names), name="gdp_multiplier")


def load_table(source=SECTOR_TABLE, size: int = SECTOR_COUNT) -> SectorTable:
    """Read a sector table: ``size`` named rows and columns, then an added_value row."""
    try:
        frame = pd.read_csv(source, index_col=0)
    except (OSError, pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ConfigurationError(f"cannot read sector table {source}: {e}") from e

    frame.index = [str(i).strip() for i in frame.index]
    frame.columns = [str(c).strip() for c in frame.columns]
    if ADDED_VALUE_ROW not in frame.index:
        raise TableValidationError(f"sector table has no '{ADDED_VALUE_ROW}' row")
    body = frame.drop(index=ADDED_VALUE_ROW)
    if body.shape != (size, size):
        raise TableValidationError(
            f"sector table has {body.shape[0]} sector rows and {body.shape[1]} columns, expected {size}x{size}"
        )
    if list(body.index) != list(body.columns):
        raise TableValidationError("sector row labels must match the column labels in the same order")
    try:
        L = body.to_numpy(dtype=float)
        va = frame.loc[ADDED_VALUE_ROW].to_numpy(dtype=float)
    except ValueError as e:
        raise TableValidationError(f"sector table has a non-numeric entry: {e}") from e

    table = SectorTable(tuple(body.index), L, va)
    logger.info(f"Loaded {table.size}-sector table from {source}")
    return table


def leontief_inverse(A: np.ndarray) -> np.ndarray:
    """(I - A)^-1 via LU with partial pivoting."""
    A = np.asarray(A, dtype=float)
    identity = np.eye(A.shape[0])
    try:
        return solve(identity - A, identity)
    except LinAlgError as e:
        raise NumericalError(f"I - A is singular: {e}") from e


def technical_from_inverse(L: np.ndarray) -> np.ndarray:
    """Recover technical coefficients A = I - L^-1, checking the round trip back to L."""
    L = np.asarray(L, dtype=float)
    identity = np.eye(L.shape[0])
    try:
        A = identity - solve(L, identity)
    except LinAlgError as e:
        raise NumericalError(f"Leontief inverse is singular: {e}") from e
    residual = np.abs(leontief_inverse(A) - L).max()
    if not residual < ROUND_TRIP_TOLERANCE:
        raise NumericalError(f"inverse round trip residual {residual:.3e} exceeds {ROUND_TRIP_TOLERANCE}")
    return A


def spectral_radius(A: np.ndarray) -> float:
    """Largest eigenvalue modulus"""
    return float(np.abs(eigvals(np.asarray(A, dtype=float))).max())


@dataclass(frozen=True, eq=False)
class DemandVector:
    """Final-demand changes per sector, NT$ millions."""

    values: np.ndarray
    allow_negative: bool = False

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise ConfigurationError("demand vector has non-finite entries")
        if not self.allow_negative and (self.values < 0).any():
            raise ConfigurationError("negative final demand requires a contraction scenario (allow_negative)")

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class VoucherAmount:
    original_amount: float
    es: float = 0.0
    ic: float = 0.0
    adjusted_amount: Optional[float] = None  # published induced demand, used verbatim when given

    def __post_init__(self):
        if self.original_amount < 0:
            raise ConfigurationError(f"original amount {self.original_amount} is negative")
        if not 0.0 <= self.es <= 1.0:
            raise ConfigurationError(f"ES {self.es} outside [0, 1]")
        if self.ic < 0:
            raise ConfigurationError(f"IC {self.ic} is negative")
        if self.adjusted_amount is not None and self.adjusted_amount < 0:
            raise ConfigurationError(f"adjusted amount {self.adjusted_amount} is negative")

    @property
    def adjusted(self) -> float:
        """Demand pushed into the target sector"""
        if self.adjusted_amount is not None:
            return self.adjusted_amount
        return self.original_amount * (1.0 - self.es) * (1.0 + self.ic)


@dataclass(frozen=True)
class ScenarioSpec:
    label: str
    vouchers: Dict[VoucherKind, VoucherAmount] = field(default_factory=dict)

    @property
    def original_total(self) -> float:
        """Face-value spending across vouchers"""
        return sum(v.original_amount for v in self.vouchers.values())

    def to_dict(self) -> dict:
        """Scenario as written to JSON"""
        entries = {}
        for kind, amount in sorted(self.vouchers.items(), key=lambda item: item[0].order):
            entry = {"original_amount": amount.original_amount, "es": amount.es, "ic": amount.ic}
            if amount.adjusted_amount is not None:
                entry["adjusted_amount"] = amount.adjusted_amount
            entries[kind.value] = entry
        return {"label": self.label, "vouchers": entries}


def _parse_scenario(entry: dict) -> ScenarioSpec:
    """Scenario from its JSON entry"""
    label = entry.get("label")
    if not label:
        raise ConfigurationError("scenario entry without a label")
    vouchers = {}
    for name, values in entry.get("vouchers", {}).items():
        try:
            kind = VoucherKind.parse(name)
        except ValueError as e:
            raise ConfigurationError(f"scenario '{label}': {e}") from e
        try:
            vouchers[kind] = VoucherAmount(
                original_amount=float(values["original_amount"]),
                es=float(values.get("es", 0.0)),
                ic=float(values.get("ic", 0.0)),
                adjusted_amount=None if values.get("adjusted_amount") is None else float(values["adjusted_amount"]),
            )
        except KeyError as e:
            raise ConfigurationError(f"scenario '{label}', voucher '{name}': missing {e}") from e
        except ConfigurationError as e:
            raise ConfigurationError(f"scenario '{label}', voucher '{name}': {e}") from e
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"scenario '{label}', voucher '{name}': {e}") from e
    return ScenarioSpec(label=label, vouchers=vouchers)


def load_scenarios(path=SCENARIO_FILE) -> List[ScenarioSpec]:
    """Load demand scenarios from JSON"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read scenario file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"scenario file {path} is not valid JSON: {e}") from e

    scenarios = [_parse_scenario(entry) for entry in payload.get("scenarios", [])]
    if not scenarios:
        raise ConfigurationError(f"scenario file {path} lists no scenarios")
    labels = [s.label for s in scenarios]
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"duplicate scenario labels in {path}: {labels}")
    return scenarios


def write_scenarios(scenarios: Sequence[ScenarioSpec], path) -> Path:
    """Write demand scenarios as JSON"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump({"scenarios": [s.to_dict() for s in scenarios]}, f, indent=2)
        f.write("\n")
    return path


def induced_demand(s: ScenarioSpec, specs: Dict[VoucherKind, VoucherSpec], size: int = SECTOR_COUNT) -> DemandVector:
    """Map each voucher's adjusted amount onto its target sector (1-based) and sum per sector."""
    values = np.zeros(size)
    for kind, amount in s.vouchers.items():
        spec = specs.get(kind)
        if spec is None:
            raise ConfigurationError(f"scenario '{s.label}': voucher '{kind.value}' has no target sector mapping")
        if not 1 <= spec.target_sector <= size:
            raise ConfigurationError(f"voucher '{kind.value}' maps to sector {spec.target_sector} outside 1..{size}")
        values[spec.target_sector - 1] += amount.adjusted
    return DemandVector(values)


def demand_table(s: ScenarioSpec) -> pd.DataFrame:
    """Original and adjusted amount per voucher, with the implied demand multiplier."""
    rows = []
    for kind, amount in sorted(s.vouchers.items(), key=lambda item: item[0].order):
        adjusted = amount.adjusted
        rows.append(
            {
                "voucher": kind.value,
                "original_amount": amount.original_amount,
                "es": amount.es,
                "ic": amount.ic,
                "adjusted_amount": adjusted,
                "demand_multiplier": adjusted / amount.original_amount if amount.original_amount else float("nan"),
            }
        )
    return pd.DataFrame(rows)


@dataclass(frozen=True, eq=False)
class ImpactReport:
    label: str
    sector_names: tuple
    gdp: np.ndarray  # NT$ millions per sector
    original_total: float

    @property
    def total(self) -> float:
        """GDP summed over sectors"""
        return float(self.gdp.sum())

    @property
    def output_multiplier(self) -> float:
        """Total GDP per unit of original spending"""
        if self.original_total == 0:
            return 0.0
        return self.total / self.original_total

    def to_frame(self) -> pd.DataFrame:
        """Sector GDP as a one-column frame"""
        return pd.DataFrame({"sector": list(self.sector_names), "gdp": self.gdp})


def impact(table: SectorTable, dF: DemandVector, original_total: float, label: str = "") -> ImpactReport:
    """GDP contribution per sector: va_i * (L dF)_i."""
    if len(dF) != table.size:
        raise ConfigurationError(f"demand vector has {len(dF)} entries, table has {table.size} sectors")
    output = table.L @ dF.values
    return ImpactReport(label=label, sector_names=table.sector_names, gdp=table.va * output, original_total=original_total)


def scenario_compare(reports: Sequence[ImpactReport]) -> pd.DataFrame:
    """Sector, total and multiplier values per report, with differences against the first one."""
    if not reports:
        raise ConfigurationError("no impact reports to compare")
    base = reports[0]
    for report in reports[1:]:
        if report.sector_names != base.sector_names:
            raise ConfigurationError(f"report '{report.label}' does not share the sector set of '{base.label}'")

    index = list(base.sector_names) + ["total", "output_multiplier"]
    frame = pd.DataFrame(index=index)
    frame.index.name = "sector"
    for report in reports:
        frame[report.label] = list(report.gdp) + [report.total, report.output_multiplier]
    for report in reports[1:]:
        frame[f"difference_{report.label}"] = frame[report.label] - frame[base.label]
    return frame


def scenarios_from_regions(regions, originals: Dict[VoucherKind, float]) -> List[ScenarioSpec]:
    """Pessimistic (upper ES, lower IC) and optimistic (lower ES, upper IC) scenarios.

    Each rate is the mean of the endpoints of the overall confidence interval it is taken from.
    """
    overall = {(r.voucher, r.metric): r for r in regions if r.group == OVERALL}
    pessimistic, optimistic = {}, {}
    for kind, original in originals.items():
        es = overall.get((kind, Metric.ES))
        ic = overall.get((kind, Metric.IC))
        if es is None or ic is None:
            logger.warning(f"{kind.value}: no overall ES/IC regions, left out of derived scenarios")
            continue
        es_hi = min(max((es.ci_upper.lo + es.ci_upper.hi) / 2, 0.0), 1.0)
        es_lo = min(max((es.ci_lower.lo + es.ci_lower.hi) / 2, 0.0), 1.0)
        ic_hi = max((ic.ci_upper.lo + ic.ci_upper.hi) / 2, 0.0)
        ic_lo = max((ic.ci_lower.lo + ic.ci_lower.hi) / 2, 0.0)
        pessimistic[kind] = VoucherAmount(original_amount=original, es=es_hi, ic=ic_lo)
        optimistic[kind] = VoucherAmount(original_amount=original, es=es_lo, ic=ic_hi)
    return [ScenarioSpec("pessimistic", pessimistic), ScenarioSpec("optimistic", optimistic)]


class ImpactModel:
    """Evaluates demand scenarios against one sector table"""

    def __init__(self, table: SectorTable, specs: Dict[VoucherKind, VoucherSpec]):
        self.logger = logging.getLogger(__name__)
        self.table = table
        self.specs = specs

    def evaluate(self, scenario: ScenarioSpec) -> ImpactReport:
        """Impact of one scenario"""
        dF = induced_demand(scenario, self.specs, self.table.size)
        report = impact(self.table, dF, scenario.original_total, label=scenario.label)
        self.logger.info(
            f"Scenario {scenario.label}: GDP {report.total:.3f} NT$M, multiplier {report.output_multiplier:.3f}"
        )
        return report

    def evaluate_all(self, scenarios: Sequence[ScenarioSpec]) -> List[ImpactReport]:
        """Impact of each scenario in order"""
        return [self.evaluate(s) for s in scenarios]

    def compare(self, scenarios: Sequence[ScenarioSpec]) -> pd.DataFrame:
        """Side-by-side impact table for the scenarios"""
        return scenario_compare(self.evaluate_all(scenarios))
