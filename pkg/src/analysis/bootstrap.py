"""Stratified percentile bootstrap for the bias-bounded estimates"""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analysis.bounds import BoundedEstimate, bias_bound, bound
from analysis.estimators import (
    IntensityEstimate,
    Metric,
    estimate,
    outcomes,
    pooled_rate,
    treatment_intensity,
)
from collectors.models import (
    OVERALL,
    Dataset,
    GroupKey,
    StratificationScheme,
    VoucherKind,
    VoucherSpec,
    Wave,
    group_label,
)
from collectors.survey_collector import midpoints, stratify
from config.errors import ConfigurationError, EstimationError
from config.settings import ALPHA, INTERVAL_MODES, REPLICATIONS, SEED, SEED_LIMIT, WORKERS

logger = logging.getLogger(__name__)

# Keeps the intensity substreams apart from the rate substreams of the same replication
_INTENSITY_STREAM = 1


def check_seed(seed) -> int:
    """Reject seeds a SeedSequence cannot take."""
    try:
        valid = not isinstance(seed, bool) and int(seed) == seed and 0 <= seed < SEED_LIMIT
    except (TypeError, ValueError):
        valid = False
    if not valid:
        raise ConfigurationError(f"seed must be an integer in [0, 2**64), got {seed}")
    return int(seed)


def percentile(samples: Sequence[float], q: float) -> float:
    """Quantile with linear interpolation between order statistics (rank q*(n-1)+1)."""
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise EstimationError("percentile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise EstimationError(f"quantile level {q} outside [0, 1]")
    return float(np.quantile(values, q, method="linear"))


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def contains(self, value: float, tol: float = 0.0) -> bool:
        """True when value lies in the interval, within tol"""
        return self.lo - tol <= value <= self.hi + tol

    @property
    def width(self) -> float:
        """Interval length"""
        return self.hi - self.lo

    def scaled(self, factor: float) -> "Interval":
        """Interval with both ends multiplied by factor"""
        return Interval(self.lo * factor, self.hi * factor)


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = REPLICATIONS
    alpha: float = ALPHA
    seed: int = SEED
    scheme: StratificationScheme = field(default_factory=StratificationScheme)
    interval_mode: str = "two_sided"
    workers: int = WORKERS

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigurationError(f"replications must be a positive integer, got {self.replications}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1], got {self.alpha}")
        check_seed(self.seed)
        if self.interval_mode not in INTERVAL_MODES:
            raise ConfigurationError(
                f"unknown interval mode '{self.interval_mode}' (expected one of: {', '.join(INTERVAL_MODES)})"
            )
        if self.interval_mode == "one_sided" and self.alpha > 0.5:
            raise ConfigurationError(f"one_sided intervals need alpha <= 0.5, got {self.alpha}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be at least 1, got {self.workers}")

    def quantile_levels(self) -> Tuple[float, float]:
        """Lower and upper quantile levels for the interval mode"""
        if self.interval_mode == "one_sided":
            return self.alpha, 1.0 - self.alpha
        return self.alpha / 2, 1.0 - self.alpha / 2

    def minimum_replications(self) -> int:
        """Fewest replications that resolve the quantile levels"""
        q_lo, q_hi = self.quantile_levels()
        return int(np.ceil(1.0 / min(q_lo, 1.0 - q_hi) - 1e-9))

    def check_resolution(self):
        """Warn when replications are too few for the quantile levels"""
        needed = self.minimum_replications()
        if self.replications < needed:
            warnings.warn(
                f"percentile resolution: {self.replications} replications cannot resolve the "
                f"{self.quantile_levels()} quantiles at alpha={self.alpha}; use at least {needed}",
                RuntimeWarning,
                stacklevel=3,
            )


@dataclass(frozen=True)
class ConfidenceRegion:
    voucher: VoucherKind
    metric: Metric
    group: GroupKey
    estimate: BoundedEstimate
    ci_lower: Interval
    ci_upper: Interval

    @property
    def combined(self) -> Interval:
        """Convex hull of the two intervals."""
        return Interval(min(self.ci_lower.lo, self.ci_upper.lo), max(self.ci_lower.hi, self.ci_upper.hi))

    @property
    def group_label(self) -> str:
        """Printable group label"""
        return group_label(self.group)


@dataclass
class BootstrapResult:
    voucher: VoucherKind
    metric: Metric
    config: BootstrapConfig
    regions: List[ConfidenceRegion]
    groups: List[GroupKey]
    lower_replicates: np.ndarray  # B x len(groups)
    upper_replicates: np.ndarray
    stratum_sizes: Optional[np.ndarray] = None  # B x J when tracked

    def region(self, key: GroupKey = OVERALL) -> ConfidenceRegion:
        """Region for one reporting group"""
        for region in self.regions:
            if region.group == key:
                return region
        raise KeyError(group_label(key))

    def to_frame(self) -> pd.DataFrame:
        """One row per reporting group"""
        return pd.DataFrame([region_row(r, self.config) for r in self.regions], columns=REGION_COLUMNS)


@dataclass(frozen=True)
class IntensityRegion:
    estimate: IntensityEstimate
    interval: Interval  # NT$ per respondent
    total_interval: Optional[Interval] = None  # NT$ millions for the program

    @property
    def voucher(self) -> VoucherKind:
        """Voucher kind the result covers"""
        return self.estimate.voucher


REGION_COLUMNS = [
    "voucher",
    "group",
    "metric",
    "point",
    "bias_bound",
    "lower",
    "upper",
    "lower_ci_lo",
    "lower_ci_hi",
    "upper_ci_lo",
    "upper_ci_hi",
    "combined_lo",
    "combined_hi",
    "B_s",
    "alpha",
    "seed",
]


def region_row(region: ConfidenceRegion, cfg: BootstrapConfig) -> dict:
    """Report row for one confidence region"""
    combined = region.combined
    return {
        "voucher": region.voucher.value,
        "group": region.group_label,
        "metric": region.metric.value,
        "point": region.estimate.point,
        "bias_bound": region.estimate.bias_bound,
        "lower": region.estimate.lower,
        "upper": region.estimate.upper,
        "lower_ci_lo": region.ci_lower.lo,
        "lower_ci_hi": region.ci_lower.hi,
        "upper_ci_lo": region.ci_upper.lo,
        "upper_ci_hi": region.ci_upper.hi,
        "combined_lo": combined.lo,
        "combined_hi": combined.hi,
        "B_s": cfg.replications,
        "alpha": cfg.alpha,
        "seed": cfg.seed,
    }


def _support(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct values and their shares"""
    support, counts = np.unique(values, return_counts=True)
    return support, counts / values.size


def replicate_means(
    strata: Sequence[np.ndarray],
    cfg: BootstrapConfig,
    track_sizes: bool = False,
    stream: Optional[int] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Resampled stratum means, one row per replication.

    Each stratum is redrawn with replacement at its own size. Drawing the
    multiplicities of the stratum's distinct outcome values from a multinomial
    is the same distribution as drawing record indices, at a fraction of the cost.
    The multiplicities sum to the stratum size, so every replicate keeps the
    observed stratum sizes by construction.
    Replication r draws from SeedSequence([seed, r]) spawned once per stratum, so
    rows do not depend on how replications are split across workers.
    """
    if not strata:
        raise EstimationError("bootstrap needs at least one stratum")
    sizes = np.array([s.size for s in strata], dtype=np.int64)
    if (sizes == 0).any():
        raise EstimationError("bootstrap stratum is empty")
    supports = [_support(np.asarray(s, dtype=float)) for s in strata]

    B, J = cfg.replications, len(strata)
    means = np.empty((B, J), dtype=float)
    drawn = np.empty((B, J), dtype=np.int64) if track_sizes else None

    def run(indices: np.ndarray):
        for r in indices:
            entropy = [cfg.seed, int(r)] if stream is None else [cfg.seed, int(r), stream]
            children = np.random.SeedSequence(entropy).spawn(J)
            for j, ((support, probs), child) in enumerate(zip(supports, children)):
                counts = np.random.default_rng(child).multinomial(sizes[j], probs)
                means[r, j] = float(counts @ support) / sizes[j]
                if drawn is not None:
                    drawn[r, j] = int(counts.sum())

    chunks = [c for c in np.array_split(np.arange(B), cfg.workers * 4) if c.size]
    if cfg.workers == 1:
        for chunk in chunks:
            run(chunk)
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for future in [pool.submit(run, chunk) for chunk in chunks]:
                future.result()
    return means, drawn


def _intervals(replicates: np.ndarray, cfg: BootstrapConfig) -> List[Interval]:
    """Percentile interval of every replicate column"""
    q_lo, q_hi = cfg.quantile_levels()
    ends = np.quantile(replicates, [q_lo, q_hi], axis=0, method="linear")
    return [Interval(float(ends[0, g]), float(ends[1, g])) for g in range(replicates.shape[1])]


class StratifiedBootstrap:
    """Runs the stratified bootstrap for one voucher and metric at a time"""

    def __init__(self, specs: Dict[VoucherKind, VoucherSpec], cfg: BootstrapConfig, waves=(Wave.ORIGINAL,)):
        self.logger = logging.getLogger(__name__)
        self.specs = specs
        self.cfg = cfg
        self.waves = tuple(waves)

    def reporting_groups(self) -> List[GroupKey]:
        """Finest strata, then single-dimension marginals that are not already strata."""
        finest = self.cfg.scheme.all_groups()
        return finest + [g for g in self.cfg.scheme.marginal_groups() if g not in finest]

    def run(self, ds: Dataset, k: VoucherKind, metric: Metric, track_sizes: bool = False) -> BootstrapResult:
        """Confidence regions for one voucher and metric"""
        cfg = self.cfg
        spec = self.specs[k]
        strata = stratify(ds, cfg.scheme, k, self.waves)
        if not strata:
            raise EstimationError(f"{k.value}: no records to bootstrap")
        for stratum in strata:
            if stratum.empty:
                raise EstimationError(f"{k.value}: stratum {stratum.label} is empty; bootstrap needs every stratum")
        cfg.check_resolution()

        finest = [s.key for s in strata]
        point_estimates = [estimate(s.records, metric, spec, s.key) for s in strata]
        b_hat = bias_bound([(e.group, e.value) for e in point_estimates])

        groups = self.reporting_groups() + [OVERALL]
        sizes = np.array([s.size for s in strata], dtype=float)
        weights = np.zeros((len(groups), len(strata)))
        points = []
        for g, key in enumerate(groups):
            members = [j for j, child in enumerate(finest) if cfg.scheme.contains(key, child)]
            weights[g, members] = sizes[members] / sizes[members].sum()
            points.append(pooled_rate([point_estimates[j] for j in members]))

        self.logger.info(
            f"Bootstrapping {k.value} {metric.value}: {len(strata)} strata, "
            f"{cfg.replications} replications, {cfg.workers} worker(s)"
        )
        means, drawn = replicate_means(
            [outcomes(s.records, metric, spec) for s in strata], cfg, track_sizes=track_sizes
        )
        b_star = means.min(axis=1, keepdims=True)
        upper = np.empty((cfg.replications, len(groups)))
        lower = np.empty_like(upper)
        for g in range(len(groups)):
            if g < len(finest):
                upper[:, g] = means[:, g]
            else:
                upper[:, g] = means @ weights[g]
            lower[:, g] = upper[:, g] - b_star[:, 0]

        ci_lower = _intervals(lower, cfg)
        ci_upper = _intervals(upper, cfg)
        regions = [
            ConfidenceRegion(
                voucher=k,
                metric=metric,
                group=key,
                estimate=bound(key, points[g], b_hat),
                ci_lower=ci_lower[g],
                ci_upper=ci_upper[g],
            )
            for g, key in enumerate(groups)
        ]
        return BootstrapResult(
            voucher=k,
            metric=metric,
            config=cfg,
            regions=regions,
            groups=groups,
            lower_replicates=lower,
            upper_replicates=upper,
            stratum_sizes=drawn,
        )

    def run_intensity(self, ds: Dataset, k: VoucherKind) -> IntensityRegion:
        """Percentile interval for the treatment intensity, resampling each wave separately."""
        spec = self.specs[k]
        original = ds.of_kind(k, (Wave.ORIGINAL,))
        extra = ds.of_kind(k, (Wave.EXTRA,))
        point = treatment_intensity(original, extra, spec)
        self.cfg.check_resolution()

        mids = np.asarray(midpoints(spec.schedule), dtype=float)
        strata = [mids[[r.bracket_index for r in wave]] for wave in (original, extra)]
        means, _ = replicate_means(strata, self.cfg, stream=_INTENSITY_STREAM)
        replicates = (means[:, 0] - means[:, 1])[:, None]
        interval = _intervals(replicates, self.cfg)[0]

        total = None
        if spec.recipients is not None:
            total = interval.scaled(spec.recipients / 1e6)
        self.logger.info(f"{k.value} intensity: {point.value:.2f} NT$ [{interval.lo:.2f}, {interval.hi:.2f}]")
        return IntensityRegion(estimate=point, interval=interval, total_interval=total)


def stratified_bootstrap(
    ds: Dataset,
    metric: Metric,
    cfg: BootstrapConfig,
    k: VoucherKind,
    specs: Dict[VoucherKind, VoucherSpec],
    waves=(Wave.ORIGINAL,),
    track_sizes: bool = False,
) -> BootstrapResult:
    """Confidence regions for one voucher and metric"""
    return StratifiedBootstrap(specs, cfg, waves).run(ds, k, metric, track_sizes=track_sizes)


def bootstrap_intensity(
    ds: Dataset, k: VoucherKind, cfg: BootstrapConfig, specs: Dict[VoucherKind, VoucherSpec]
) -> IntensityRegion:
    """Percentile interval for treatment intensity"""
    return StratifiedBootstrap(specs, cfg).run_intensity(ds, k)
