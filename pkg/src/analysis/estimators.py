"""Point estimators: expenditure substitution, induced consumption and treatment intensity"""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analysis.bounds import bounded_estimates
from collectors.models import (
    OVERALL,
    BracketSchedule,
    Dataset,
    GroupKey,
    StratificationScheme,
    SurveyRecord,
    VoucherKind,
    VoucherSpec,
    Wave,
    group_label,
)
from collectors.survey_collector import midpoints, select, stratify
from config.errors import EstimationError

logger = logging.getLogger(__name__)


class Metric(str, Enum):
    ES = "es"
    IC = "ic"

    @property
    def title(self) -> str:
        """Report heading"""
        return {"es": "Expenditure Substitution", "ic": "Induced Consumption"}[self.value]


@dataclass(frozen=True)
class RateEstimate:
    value: float
    n: int
    voucher: VoucherKind
    group: GroupKey = OVERALL
    metric: Metric = Metric.ES
    exact: Optional[Fraction] = None  # ES only: the count ratio itself

    @property
    def group_label(self) -> str:
        """Printable group label"""
        return group_label(self.group)


@dataclass(frozen=True)
class BracketDistribution:
    shares: Tuple[float, ...]
    counts: Tuple[int, ...]
    n: int

    def mean_midpoint(self, schedule: BracketSchedule) -> float:
        """Share-weighted bracket midpoint"""
        total = 0.0
        for m, share in zip(midpoints(schedule), self.shares):
            total += m * share
        return total


@dataclass(frozen=True)
class IntensityEstimate:
    value: float  # NT$ per redeeming respondent
    voucher: VoucherKind
    n_original: int
    n_extra: int

    def program_total(self, recipients: Optional[int]) -> Optional[float]:
        """NT$ millions for the whole program, given the recipient count."""
        if recipients is None:
            return None
        return self.value * recipients / 1e6


def _single_kind(records: Sequence[SurveyRecord]) -> VoucherKind:
    """Voucher kind shared by every record"""
    if not records:
        raise EstimationError("undefined estimate: empty subset")
    kinds = {r.voucher for r in records}
    if len(kinds) != 1:
        raise EstimationError(f"records mix voucher kinds: {sorted(k.value for k in kinds)}")
    return next(iter(kinds))


def substitution_rate(records: Sequence[SurveyRecord], group: GroupKey = OVERALL) -> RateEstimate:
    """Share of respondents answering "No" to the substitution question."""
    kind = _single_kind(records)
    n = len(records)
    substituted = sum(r.substituted for r in records)
    return RateEstimate(
        value=substituted / n,
        n=n,
        voucher=kind,
        group=group,
        metric=Metric.ES,
        exact=Fraction(substituted, n),
    )


def bracket_distribution(records: Sequence[SurveyRecord], schedule: BracketSchedule) -> BracketDistribution:
    """Bracket shares and counts"""
    if not records:
        raise EstimationError("undefined estimate: empty subset")
    counts = [0] * schedule.count
    for r in records:
        if not 0 <= r.bracket_index < schedule.count:
            raise EstimationError(f"bracket index {r.bracket_index} out of range for {r.voucher.value}")
        counts[r.bracket_index] += 1
    n = len(records)
    return BracketDistribution(shares=tuple(c / n for c in counts), counts=tuple(counts), n=n)


def induced_rate(records: Sequence[SurveyRecord], spec: VoucherSpec, group: GroupKey = OVERALL) -> RateEstimate:
    """Average imputed out-of-pocket spending relative to the original face value."""
    kind = _single_kind(records)
    if kind != spec.kind:
        raise EstimationError(f"records are {kind.value} vouchers but the spec is for {spec.kind.value}")
    dist = bracket_distribution(records, spec.schedule)
    return RateEstimate(
        value=dist.mean_midpoint(spec.schedule) / spec.face_value_original,
        n=dist.n,
        voucher=kind,
        group=group,
        metric=Metric.IC,
    )


def treatment_intensity(
    original: Sequence[SurveyRecord], extra: Sequence[SurveyRecord], spec: VoucherSpec
) -> IntensityEstimate:
    """Difference in mean imputed spending between original-wave and extra-wave respondents (NT$)."""
    if not original or not extra:
        raise EstimationError(f"{spec.kind.value}: treatment intensity needs both original and extra respondents")
    kinds = {_single_kind(original), _single_kind(extra)}
    if kinds != {spec.kind}:
        raise EstimationError(f"treatment intensity inputs do not match the {spec.kind.value} spec")
    first = bracket_distribution(original, spec.schedule)
    second = bracket_distribution(extra, spec.schedule)
    value = 0.0
    for m, b1, b2 in zip(midpoints(spec.schedule), first.shares, second.shares):
        value += m * (b1 - b2)
    return IntensityEstimate(value=value, voucher=spec.kind, n_original=first.n, n_extra=second.n)


def estimate(records: Sequence[SurveyRecord], metric: Metric, spec: VoucherSpec, group: GroupKey = OVERALL) -> RateEstimate:
    """Rate estimate for a metric"""
    if metric is Metric.ES:
        return substitution_rate(records, group)
    return induced_rate(records, spec, group)


def outcomes(records: Sequence[SurveyRecord], metric: Metric, spec: VoucherSpec) -> np.ndarray:
    """Per-respondent observed outcome y_ik whose group mean is the metric."""
    if metric is Metric.ES:
        return np.array([r.substituted for r in records], dtype=float)
    mids = np.asarray(midpoints(spec.schedule), dtype=float)
    index = np.array([r.bracket_index for r in records], dtype=int)
    return mids[index] / spec.face_value_original


def pooled_rate(estimates: Iterable[RateEstimate]) -> float:
    """n-weighted mean of group estimates (exact for ES when ``exact`` is carried)."""
    estimates = list(estimates)
    n = sum(e.n for e in estimates)
    if n == 0:
        raise EstimationError("undefined estimate: no observations across groups")
    if all(e.exact is not None for e in estimates):
        return float(sum(e.exact * e.n for e in estimates) / n)
    return sum(e.value * e.n for e in estimates) / n


class EffectEstimator:
    """Builds the estimates table for a dataset: voucher x group x metric"""

    def __init__(self, specs: Dict[VoucherKind, VoucherSpec], scheme: StratificationScheme, waves=(Wave.ORIGINAL,)):
        self.logger = logging.getLogger(__name__)
        self.specs = specs
        self.scheme = scheme
        self.waves = tuple(waves)

    def group_estimates(self, ds: Dataset, kind: VoucherKind, metric: Metric) -> List[RateEstimate]:
        """Estimates for the non-empty finest strata of voucher ``kind``."""
        spec = self.specs[kind]
        return [
            estimate(stratum.records, metric, spec, stratum.key)
            for stratum in stratify(ds, self.scheme, kind, self.waves)
            if not stratum.empty
        ]

    def reporting_groups(self) -> List[GroupKey]:
        """Groups reported under the scheme"""
        if len(self.scheme.dimensions) <= 1:
            return self.scheme.all_groups()
        return self.scheme.marginal_groups()

    def rate_rows(self, ds: Dataset) -> List[dict]:
        """Rate rows for every voucher, metric and group"""
        rows = []
        for kind in VoucherKind:
            records = ds.of_kind(kind, self.waves)
            if not records:
                continue
            spec = self.specs[kind]
            for metric in Metric:
                for key in self.reporting_groups() + [OVERALL]:
                    members = select(records, self.scheme, key)
                    if not members:
                        self.logger.warning(f"{kind.value} {group_label(key)}: empty group, {metric.value} undefined")
                        rows.append(self._row(kind, key, metric.value, float("nan"), 0))
                        continue
                    est = estimate(members, metric, spec, key)
                    rows.append(self._row(kind, key, metric.value, est.value, est.n))
        return rows

    def intensity_rows(self, ds: Dataset) -> List[dict]:
        """Intensity rows for vouchers with both waves"""
        rows = []
        for kind in VoucherKind:
            original = ds.of_kind(kind, (Wave.ORIGINAL,))
            extra = ds.of_kind(kind, (Wave.EXTRA,))
            if not original or not extra:
                continue
            est = treatment_intensity(original, extra, self.specs[kind])
            rows.append(self._row(kind, OVERALL, "it", est.value, est.n_original + est.n_extra))
            total = est.program_total(self.specs[kind].recipients)
            if total is not None:
                rows.append(self._row(kind, OVERALL, "it_total_millions", total, est.n_original + est.n_extra))
        return rows

    def bound_rows(self, ds: Dataset) -> List[dict]:
        """Lower/upper bounds per reporting group, bias bound taken over the finest non-empty strata."""
        rows = []
        for kind in VoucherKind:
            records = ds.of_kind(kind, self.waves)
            if not records:
                continue
            spec = self.specs[kind]
            for metric in Metric:
                finest = self.group_estimates(ds, kind, metric)
                finest_keys = {e.group for e in finest}
                reporting = []
                for key in self.reporting_groups():
                    members = select(records, self.scheme, key)
                    if key not in finest_keys and members:
                        reporting.append((key, estimate(members, metric, spec, key).value))
                bounded = bounded_estimates([(e.group, e.value) for e in finest], pooled_rate(finest), reporting)
                for b in bounded:
                    rows.append(
                        {
                            "voucher": kind.value,
                            "group": b.group_label,
                            "metric": metric.value,
                            "point": b.point,
                            "bias_bound": b.bias_bound,
                            "lower": b.lower,
                            "upper": b.upper,
                        }
                    )
        return rows

    def estimate_table(self, ds: Dataset) -> pd.DataFrame:
        """All estimates as one frame"""
        rows = self.rate_rows(ds) + self.intensity_rows(ds)
        self.logger.info(f"Computed {len(rows)} estimate rows")
        return pd.DataFrame(rows, columns=["voucher", "group", "metric", "value", "n"])

    @staticmethod
    def _row(kind: VoucherKind, key: GroupKey, metric: str, value: float, n: int) -> dict:
        """One estimate row"""
        return {"voucher": kind.value, "group": group_label(key), "metric": metric, "value": value, "n": n}
