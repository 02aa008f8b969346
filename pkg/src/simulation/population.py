"""Synthetic survey populations with known ground truth

Responses follow y = theta + B + noise per demographic cell:
- substitution answers are Bernoulli draws whose probability is the cell's true
  rate plus an individual bias that always carries the configured sign,
- spending brackets are categorical draws from a tilted base distribution, then
  moved one bracket in the bias direction with a cell-specific probability.
Ground truth is computed analytically from the configuration, never from the draws.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analysis.bootstrap import BootstrapConfig, StratifiedBootstrap, check_seed
from analysis.estimators import Metric
from collectors.models import (
    OVERALL,
    Dataset,
    DemographicProfile,
    GroupKey,
    StratificationScheme,
    SurveyRecord,
    VoucherKind,
    VoucherSpec,
    Wave,
    group_label,
)
from collectors.survey_collector import load_voucher_specs, midpoints, write_survey
from config.errors import ConfigurationError, EstimationError
from config.settings import AGE_BANDS, DIMENSION_FIELDS, GENDERS, POPULATION_FILE, RESIDENCES

logger = logging.getLogger(__name__)

CENTERING_TOLERANCE = 1e-12
MIN_TRIALS = 100

_RAW_ANSWERS = {"gender": GENDERS, "residence": RESIDENCES, "age_band": AGE_BANDS}

Effects = Dict[str, Dict[str, float]]


@dataclass(frozen=True)
class SubstitutionModel:
    theta: float
    effects: Effects = field(default_factory=dict)
    bias: float = 0.0
    bias_effects: Effects = field(default_factory=dict)
    bias_sign: int = 1
    bias_spread: float = 0.0


@dataclass(frozen=True)
class SpendingModel:
    brackets: Tuple[float, ...]
    tilt: Effects = field(default_factory=dict)
    shift: float = 0.0
    shift_effects: Effects = field(default_factory=dict)
    bias_sign: int = 1


@dataclass(frozen=True)
class ExtraWave:
    size: int
    brackets: Tuple[float, ...]


@dataclass(frozen=True)
class VoucherPopulation:
    kind: VoucherKind
    substitution: SubstitutionModel
    spending: SpendingModel
    extra: Optional[ExtraWave] = None
    cell_sizes: Dict[str, int] = field(default_factory=dict)  # group label -> size override

    @classmethod
    def non_recipient(cls, kind: VoucherKind, n_brackets: int, extra_size: int = 0) -> "VoucherPopulation":
        """Everyone answers as if no voucher had been received: all outcomes zero."""
        point_mass = tuple([1.0] + [0.0] * (n_brackets - 1))
        return cls(
            kind=kind,
            substitution=SubstitutionModel(theta=0.0),
            spending=SpendingModel(brackets=point_mass),
            extra=ExtraWave(extra_size, point_mass) if extra_size else None,
        )


@dataclass(frozen=True)
class PopulationSpec:
    vouchers: Tuple[VoucherPopulation, ...]
    seed: int = 1
    cell_size: int = 120
    scheme: StratificationScheme = field(default_factory=StratificationScheme)

    def __post_init__(self):
        check_seed(self.seed)

    def sizes(self, population: VoucherPopulation) -> Dict[GroupKey, int]:
        """Cell sizes for one voucher population"""
        sizes = {key: self.cell_size for key in self.scheme.all_groups()}
        labels = {group_label(key): key for key in sizes}
        for label, n in population.cell_sizes.items():
            if label not in labels:
                raise ConfigurationError(f"{population.kind.value}: unknown cell '{label}' in cell_sizes")
            if int(n) < 0:
                raise ConfigurationError(f"{population.kind.value}: cell '{label}' has negative size {n}")
            sizes[labels[label]] = int(n)
        return sizes


@dataclass(frozen=True)
class NoiseModelSpec:
    """Resolved per-cell effects and biases for the substitution answer."""

    theta: float
    eta: Dict[GroupKey, float]
    bias: float
    nu: Dict[GroupKey, float]
    bias_sign: int
    spread: float

    def cell_effect(self, key: GroupKey) -> float:
        """True effect in a cell"""
        return self.theta + self.eta[key]

    def cell_bias(self, key: GroupKey) -> float:
        """Signed response bias in a cell"""
        return self.bias_sign * (self.bias + self.nu[key])

    def check_centered(self, weights: Dict[GroupKey, float]):
        """Fail unless group deviations have zero weighted mean"""
        for name, deviations in (("eta", self.eta), ("nu", self.nu)):
            total = sum(weights[key] * deviations[key] for key in deviations)
            if abs(total) > CENTERING_TOLERANCE:
                raise ConfigurationError(f"group deviations {name} are not centered (weighted sum {total:.3e})")


@dataclass
class VoucherTruth:
    kind: VoucherKind
    sizes: Dict[GroupKey, int]
    es_true: Dict[GroupKey, float]
    es_observed: Dict[GroupKey, float]
    ic_true: Dict[GroupKey, float]
    ic_observed: Dict[GroupKey, float]
    it_true: Optional[float] = None
    signed_bias_min: float = 0.0  # smallest D * B_ik drawn

    @property
    def empty_cells(self) -> List[GroupKey]:
        """Cells with no population"""
        return [key for key, n in self.sizes.items() if n == 0]

    def _metric(self, metric: Metric, observed: bool) -> Dict[GroupKey, float]:
        """Cell values of a metric, true or observed"""
        if metric is Metric.ES:
            return self.es_observed if observed else self.es_true
        return self.ic_observed if observed else self.ic_true

    def _weighted(self, values: Dict[GroupKey, float], key: GroupKey, scheme: StratificationScheme) -> float:
        """Size-weighted mean over the cells inside a group"""
        members = [c for c, n in self.sizes.items() if n and scheme.contains(key, c)]
        if not members:
            raise EstimationError(f"{self.kind.value}: group {group_label(key)} has no population")
        total = sum(self.sizes[c] for c in members)
        return sum(self.sizes[c] * values[c] for c in members) / total

    def targets(self, metric: Metric, key: GroupKey, scheme: StratificationScheme) -> Dict[str, float]:
        """Population values the bounds and their intervals aim at, for any reporting group."""
        observed = self._metric(metric, True)
        upper = self._weighted(observed, key, scheme)
        floor = min(v for c, v in observed.items() if self.sizes[c])
        return {
            "true": self._weighted(self._metric(metric, False), key, scheme),
            "lower": upper - floor,
            "upper": upper,
        }

    def to_dict(self, scheme: StratificationScheme) -> dict:
        """Ground truth for one voucher as written to JSON"""
        cells = {}
        for key, n in self.sizes.items():
            entry = {"n": n}
            if n:
                entry.update(
                    {
                        "es_true": self.es_true[key],
                        "es_observed": self.es_observed[key],
                        "ic_true": self.ic_true[key],
                        "ic_observed": self.ic_observed[key],
                    }
                )
            cells[group_label(key)] = entry
        payload = {"cells": cells, "it_true": self.it_true}
        if any(self.sizes.values()):
            payload["overall"] = {
                metric.value: self.targets(metric, OVERALL, scheme) for metric in Metric
            }
        payload["empty_strata"] = [group_label(key) for key in self.empty_cells]
        return payload


@dataclass
class GroundTruth:
    seed: int
    vouchers: Dict[VoucherKind, VoucherTruth]

    def __getitem__(self, kind: VoucherKind) -> VoucherTruth:
        return self.vouchers[kind]

    def empty_strata(self) -> Dict[str, List[str]]:
        """Empty cells per voucher, by label"""
        return {
            kind.value: [group_label(key) for key in truth.empty_cells]
            for kind, truth in self.vouchers.items()
            if truth.empty_cells
        }


def _parse_effects(raw, where: str, scheme: StratificationScheme) -> Effects:
    """Per-level effects, checked against the scheme"""
    effects = {}
    for dim, levels in (raw or {}).items():
        if dim not in scheme.dimensions:
            raise ConfigurationError(f"{where}: dimension '{dim}' is not stratified")
        known = scheme.levels(dim)
        for level in levels:
            if level not in known:
                raise ConfigurationError(f"{where}: unknown {dim} level '{level}' (expected one of: {', '.join(known)})")
        effects[dim] = {level: float(v) for level, v in levels.items()}
    return effects


def _parse_sign(value, where: str) -> int:
    """Bias sign, either -1 or +1"""
    if int(value) not in (-1, 1):
        raise ConfigurationError(f"{where}: bias_sign must be -1 or +1, got {value}")
    return int(value)


def _parse_distribution(values, where: str) -> Tuple[float, ...]:
    """Bracket probabilities, checked to sum to one"""
    shares = tuple(float(v) for v in values)
    if any(v < 0 for v in shares) or abs(sum(shares) - 1.0) > 1e-9:
        raise ConfigurationError(f"{where}: bracket probabilities must be non-negative and sum to 1")
    return shares


def _parse_voucher(entry: dict, scheme: StratificationScheme) -> VoucherPopulation:
    """Voucher population from its JSON entry"""
    kind = VoucherKind.parse(entry["kind"])
    where = f"population {kind.value}"
    sub = entry["substitution"]
    spend = entry["spending"]
    substitution = SubstitutionModel(
        theta=float(sub["theta"]),
        effects=_parse_effects(sub.get("effects"), f"{where} substitution", scheme),
        bias=float(sub.get("bias", 0.0)),
        bias_effects=_parse_effects(sub.get("bias_effects"), f"{where} substitution", scheme),
        bias_sign=_parse_sign(sub.get("bias_sign", 1), where),
        bias_spread=float(sub.get("bias_spread", 0.0)),
    )
    if not 0.0 <= substitution.bias_spread <= 1.0:
        raise ConfigurationError(f"{where}: bias_spread must lie in [0, 1]")
    spending = SpendingModel(
        brackets=_parse_distribution(spend["brackets"], f"{where} spending"),
        tilt=_parse_effects(spend.get("tilt"), f"{where} spending", scheme),
        shift=float(spend.get("shift", 0.0)),
        shift_effects=_parse_effects(spend.get("shift_effects"), f"{where} spending", scheme),
        bias_sign=_parse_sign(spend.get("bias_sign", 1), where),
    )
    extra = None
    if entry.get("extra"):
        extra = ExtraWave(
            size=int(entry["extra"]["size"]),
            brackets=_parse_distribution(entry["extra"]["brackets"], f"{where} extra wave"),
        )
        if extra.size < 0:
            raise ConfigurationError(f"{where}: extra wave size must be >= 0")
    return VoucherPopulation(kind, substitution, spending, extra, dict(entry.get("cell_sizes", {})))


def load_population(path=POPULATION_FILE, seed: Optional[int] = None) -> PopulationSpec:
    """Load the synthetic population from JSON"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read population config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"population config {path} is not valid JSON: {e}") from e

    scheme = StratificationScheme(tuple(payload["dimensions"])) if "dimensions" in payload else StratificationScheme()
    try:
        vouchers = tuple(_parse_voucher(entry, scheme) for entry in payload.get("vouchers", []))
        spec = PopulationSpec(
            vouchers=vouchers,
            seed=int(payload.get("seed", 1) if seed is None else seed),
            cell_size=int(payload.get("cell_size", 120)),
            scheme=scheme,
        )
    except KeyError as e:
        raise ConfigurationError(f"population config {path} is missing {e}") from e
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"population config {path}: {e}") from e
    if spec.cell_size < 0:
        raise ConfigurationError("cell_size must be >= 0")
    if not vouchers:
        raise ConfigurationError(f"population config {path} lists no vouchers")
    return spec


def _additive(effects: Effects, key: GroupKey) -> float:
    """Sum of the per-level effects of a cell"""
    levels = dict(key)
    return sum(by_level.get(levels[dim], 0.0) for dim, by_level in effects.items())


def _centered(effects: Effects, weights: Dict[GroupKey, float]) -> Dict[GroupKey, float]:
    """Effects with their weighted mean removed"""
    raw = {key: _additive(effects, key) for key in weights}
    mean = sum(weights[key] * raw[key] for key in weights)
    return {key: raw[key] - mean for key in weights}


def _weights(sizes: Dict[GroupKey, int]) -> Dict[GroupKey, float]:
    """Cell weights proportional to size, uniform when all are empty"""
    total = sum(sizes.values())
    if total == 0:
        return {key: 1.0 / len(sizes) for key in sizes}
    return {key: n / total for key, n in sizes.items()}


def noise_model(population: VoucherPopulation, sizes: Dict[GroupKey, int]) -> NoiseModelSpec:
    """Centered noise model for one voucher population"""
    sub = population.substitution
    weights = _weights(sizes)
    model = NoiseModelSpec(
        theta=sub.theta,
        eta=_centered(sub.effects, weights),
        bias=sub.bias,
        nu=_centered(sub.bias_effects, weights),
        bias_sign=sub.bias_sign,
        spread=sub.bias_spread,
    )
    model.check_centered(weights)
    return model


def _tilted(base: Sequence[float], tau: float) -> np.ndarray:
    """Base distribution tilted toward higher brackets"""
    base = np.asarray(base, dtype=float)
    steps = np.arange(base.size) / (base.size - 1)
    weights = base * np.exp(tau * steps)
    return weights / weights.sum()


def _shifted(pi: np.ndarray, q: float, sign: int) -> np.ndarray:
    """Distribution after moving each answer one bracket in direction ``sign`` with probability q."""
    moved = np.zeros_like(pi)
    top = pi.size - 1
    for c, share in enumerate(pi):
        moved[min(max(c + sign, 0), top)] += share
    return (1.0 - q) * pi + q * moved


def _mean_ratio(pi: np.ndarray, mids: np.ndarray, face_value: float) -> float:
    """Mean spending as a multiple of face value"""
    return float(pi @ mids) / face_value


class PopulationSimulator:
    """Draws survey datasets from a PopulationSpec"""

    def __init__(self, spec: PopulationSpec, specs: Optional[Dict[VoucherKind, VoucherSpec]] = None):
        self.logger = logging.getLogger(__name__)
        self.spec = spec
        self.specs = specs if specs is not None else load_voucher_specs()

    def generate(self, entropy=None) -> Tuple[Dataset, GroundTruth]:
        """Draw one dataset and its ground truth"""
        entropy = self.spec.seed if entropy is None else entropy
        children = np.random.SeedSequence(entropy).spawn(len(self.spec.vouchers))
        records: List[SurveyRecord] = []
        truths = {}
        for population, child in zip(self.spec.vouchers, children):
            rng = np.random.default_rng(child)
            voucher_records, truth = self._voucher(population, rng)
            records.extend(voucher_records)
            truths[population.kind] = truth
        self.logger.info(f"Generated {len(records)} synthetic records for {len(truths)} voucher type(s)")
        return Dataset(tuple(records)), GroundTruth(seed=self.spec.seed, vouchers=truths)

    def _voucher(self, population: VoucherPopulation, rng: np.random.Generator):
        """Records and ground truth for one voucher"""
        kind = population.kind
        voucher_spec = self.specs.get(kind)
        if voucher_spec is None:
            raise ConfigurationError(f"population lists '{kind.value}' but no voucher configuration exists")
        C = voucher_spec.schedule.count
        for name, dist in (("spending", population.spending.brackets), ("extra wave", population.extra.brackets if population.extra else None)):
            if dist is not None and len(dist) != C:
                raise ConfigurationError(f"{kind.value} {name}: {len(dist)} bracket probabilities for {C} brackets")

        scheme = self.spec.scheme
        sizes = self.spec.sizes(population)
        model = noise_model(population, sizes)
        mids = np.asarray(midpoints(voucher_spec.schedule), dtype=float)
        face = voucher_spec.face_value_original
        spending = population.spending

        records, es_true, es_obs, ic_true, ic_obs = [], {}, {}, {}, {}
        observed_mix = np.zeros(C)
        signed_min = np.inf
        for key, n in sizes.items():
            theta_j = model.cell_effect(key)
            bias_j = model.cell_bias(key)
            if (self._bias_magnitude(model, key)) < 0:
                raise ConfigurationError(f"{kind.value} {group_label(key)}: bias of the wrong sign for bias_sign {model.bias_sign}")
            extremes = (theta_j + bias_j * (1 - model.spread), theta_j + bias_j * (1 + model.spread))
            if not (0.0 <= theta_j <= 1.0 and all(0.0 <= p <= 1.0 for p in extremes)):
                raise ConfigurationError(f"{kind.value} {group_label(key)}: substitution probability leaves [0, 1]")
            pi = _tilted(spending.brackets, _additive(spending.tilt, key))
            q = spending.shift + _additive(spending.shift_effects, key)
            if not 0.0 <= q <= 1.0:
                raise ConfigurationError(f"{kind.value} {group_label(key)}: bracket shift probability {q} outside [0, 1]")
            pi_obs = _shifted(pi, q, spending.bias_sign)

            es_true[key] = theta_j
            es_obs[key] = theta_j + bias_j
            ic_true[key] = _mean_ratio(pi, mids, face)
            ic_obs[key] = _mean_ratio(pi_obs, mids, face)
            observed_mix += n * pi_obs
            if n == 0:
                continue

            individual_bias = bias_j * (1.0 + model.spread * (2.0 * rng.random(n) - 1.0))
            signed_min = min(signed_min, float((model.bias_sign * individual_bias).min()))
            substituted = rng.random(n) < theta_j + individual_bias
            brackets = rng.choice(C, size=n, p=pi)
            moves = rng.random(n) < q
            brackets = np.clip(brackets + spending.bias_sign * moves, 0, C - 1)
            for i in range(n):
                records.append(
                    SurveyRecord(
                        respondent_id=f"{kind.value}-{len(records) + 1:05d}",
                        voucher=kind,
                        profile=self._profile(key, rng),
                        triggered=not bool(substituted[i]),
                        bracket_index=int(brackets[i]),
                        wave=Wave.ORIGINAL,
                    )
                )

        it_true = None
        extra = population.extra
        if extra is not None and extra.size and sum(sizes.values()):
            cells = [key for key, n in sizes.items() if n]
            original_mix = observed_mix / observed_mix.sum()
            it_true = float(original_mix @ mids - np.asarray(extra.brackets) @ mids)
            extra_brackets = rng.choice(C, size=extra.size, p=np.asarray(extra.brackets))
            picks = rng.integers(0, len(cells), size=extra.size)
            for i in range(extra.size):
                key = cells[picks[i]]
                substituted = rng.random() < model.cell_effect(key) + model.cell_bias(key)
                records.append(
                    SurveyRecord(
                        respondent_id=f"{kind.value}-x{i + 1:05d}",
                        voucher=kind,
                        profile=self._profile(key, rng),
                        triggered=not substituted,
                        bracket_index=int(extra_brackets[i]),
                        wave=Wave.EXTRA,
                    )
                )

        truth = VoucherTruth(
            kind=kind,
            sizes=sizes,
            es_true=es_true,
            es_observed=es_obs,
            ic_true=ic_true,
            ic_observed=ic_obs,
            it_true=it_true,
            signed_bias_min=0.0 if signed_min == np.inf else signed_min,
        )
        return records, truth

    @staticmethod
    def _bias_magnitude(model: NoiseModelSpec, key: GroupKey) -> float:
        """Unsigned bias in a cell"""
        return model.bias + model.nu[key]

    def _profile(self, key: GroupKey, rng: np.random.Generator) -> DemographicProfile:
        """Raw answers drawn uniformly among those that coarsen to the cell's levels."""
        levels = dict(key)
        answers = {}
        for dim, attr in DIMENSION_FIELDS.items():
            if dim in levels:
                options = self.spec.scheme.raw_values(dim, levels[dim])
            else:
                options = list(_RAW_ANSWERS[attr])
            answers[attr] = options[int(rng.integers(0, len(options)))]
        return DemographicProfile(**answers)


def generate(spec: PopulationSpec, specs: Optional[Dict[VoucherKind, VoucherSpec]] = None, entropy=None):
    """Draw one dataset and its ground truth"""
    return PopulationSimulator(spec, specs).generate(entropy)


def write_ground_truth(truth: GroundTruth, scheme: StratificationScheme, path) -> Path:
    """Write the ground-truth sidecar"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "seed": truth.seed,
        "vouchers": {kind.value: t.to_dict(scheme) for kind, t in truth.vouchers.items()},
        "empty_strata": truth.empty_strata(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    return path


def simulate(spec: PopulationSpec, out_dir, specs: Optional[Dict[VoucherKind, VoucherSpec]] = None) -> Tuple[Path, Path]:
    """Write survey.csv and its ground_truth.json sidecar into ``out_dir``."""
    out_dir = Path(out_dir)
    ds, truth = generate(spec, specs)
    survey_path = write_survey(ds, out_dir / "survey.csv")
    truth_path = write_ground_truth(truth, spec.scheme, out_dir / "ground_truth.json")
    empty = truth.empty_strata()
    if empty:
        logger.info(f"Empty strata noted in sidecar: {empty}")
    return survey_path, truth_path


def coverage_experiment(
    spec: PopulationSpec,
    cfg: BootstrapConfig,
    trials: int,
    metrics: Sequence[Metric] = tuple(Metric),
    specs: Optional[Dict[VoucherKind, VoucherSpec]] = None,
    tolerance: float = 1e-12,
) -> pd.DataFrame:
    """Share of trials in which each interval contains its population target.

    ci_lower is scored against the lower-bound target, ci_upper against the
    observed-response mean and the combined region against the true effect.
    """
    if trials < MIN_TRIALS:
        raise ConfigurationError(f"coverage needs at least {MIN_TRIALS} trials, got {trials}")
    specs = specs if specs is not None else load_voucher_specs()
    cfg = replace(cfg, scheme=spec.scheme)
    simulator = PopulationSimulator(spec, specs)
    hits: Dict[tuple, int] = {}

    for trial in range(trials):
        ds, truth = simulator.generate([spec.seed, trial])
        trial_cfg = replace(cfg, seed=int(np.random.SeedSequence([cfg.seed, trial]).generate_state(1)[0]))
        runner = StratifiedBootstrap(specs, trial_cfg)
        for population in spec.vouchers:
            kind = population.kind
            for metric in metrics:
                result = runner.run(ds, kind, metric)
                for region in result.regions:
                    target = truth[kind].targets(metric, region.group, spec.scheme)
                    scored = (
                        ("ci_lower", region.ci_lower, target["lower"]),
                        ("ci_upper", region.ci_upper, target["upper"]),
                        ("combined", region.combined, target["true"]),
                    )
                    for name, interval, value in scored:
                        row = (kind.value, metric.value, region.group_label, name)
                        hits[row] = hits.get(row, 0) + int(interval.contains(value, tolerance))

    logger.info(f"Coverage experiment finished: {trials} trials, {len(hits)} intervals scored")
    rows = [
        {"voucher": v, "metric": m, "group": g, "interval": i, "coverage": count / trials, "trials": trials}
        for (v, m, g, i), count in hits.items()
    ]
    return pd.DataFrame(rows, columns=["voucher", "metric", "group", "interval", "coverage", "trials"])
