from __future__ import annotations

import json

import pytest

from analysis.bootstrap import BootstrapConfig
from analysis.estimators import Metric, induced_rate, substitution_rate
from collectors.models import OVERALL, StratificationScheme, VoucherKind, Wave
from collectors.survey_collector import ingest
from config.errors import ConfigurationError
from simulation.population import (
    PopulationSimulator,
    PopulationSpec,
    SpendingModel,
    SubstitutionModel,
    VoucherPopulation,
    coverage_experiment,
    generate,
    load_population,
    noise_model,
    simulate,
    write_ground_truth,
)

GENDER = StratificationScheme(("gender",))
MALE, FEMALE = (("gender", "male"),), (("gender", "female"),)
DINING_BRACKETS = (0.25, 0.05, 0.08, 0.15, 0.17, 0.12, 0.10, 0.08)


def dining_population(bias=0.0, cell_sizes=None, shift=0.0):
    return VoucherPopulation(
        kind=VoucherKind.DINING,
        substitution=SubstitutionModel(
            theta=0.35,
            effects={"gender": {"male": -0.15, "female": 0.15}},
            bias=bias,
            bias_spread=0.5,
        ),
        spending=SpendingModel(brackets=DINING_BRACKETS, shift=shift),
        cell_sizes=cell_sizes or {},
    )


def gender_spec(population, cell_size=200, seed=3):
    return PopulationSpec(vouchers=(population,), seed=seed, cell_size=cell_size, scheme=GENDER)


def test_shipped_population_loads():
    spec = load_population()
    assert spec.seed == 1
    assert spec.cell_size == 120
    assert {p.kind for p in spec.vouchers} == set(VoucherKind)
    assert load_population(seed=42).seed == 42


def test_population_config_errors(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_population(tmp_path / "missing.json")
    path = tmp_path / "population.json"
    path.write_text(
        json.dumps(
            {
                "vouchers": [
                    {
                        "kind": "dining",
                        "substitution": {"theta": 0.1, "effects": {"income": {"high": 0.1}}},
                        "spending": {"brackets": list(DINING_BRACKETS)},
                    }
                ]
            }
        ),
        encoding="utf-8",
    )
    with pytest.raises(ConfigurationError, match="income"):
        load_population(path)
    with pytest.raises(ConfigurationError, match="seed"):
        load_population(seed=-1)


def test_generation_is_deterministic(specs):
    spec = load_population()
    first, truth = generate(spec, specs)
    again, _ = generate(spec, specs)
    other, _ = generate(spec, specs, entropy=[spec.seed, 1])
    assert first == again
    assert first != other
    assert len(first.records) == len({(r.respondent_id, r.voucher, r.wave) for r in first.records})
    assert len(first.of_kind(VoucherKind.DINING, (Wave.ORIGINAL,))) == 12 * 120


def test_response_bias_has_the_configured_sign(specs):
    _, truth = generate(load_population(), specs)
    for kind in VoucherKind:
        assert truth[kind].signed_bias_min >= 0.0


def test_group_deviations_are_centered():
    population = dining_population()
    sizes = {MALE: 50, FEMALE: 150}
    model = noise_model(population, sizes)
    weighted = sum(sizes[k] * model.eta[k] for k in sizes) / 200
    assert weighted == pytest.approx(0.0, abs=1e-12)


def test_unbiased_targets_by_gender(specs):
    _, truth = generate(gender_spec(dining_population()), specs)
    dining = truth[VoucherKind.DINING]
    assert dining.es_true[MALE] == pytest.approx(0.2)
    assert dining.es_true[FEMALE] == pytest.approx(0.5)
    assert dining.es_observed == dining.es_true
    male = dining.targets(Metric.ES, MALE, GENDER)
    female = dining.targets(Metric.ES, FEMALE, GENDER)
    assert male["lower"] == pytest.approx(0.0, abs=1e-12)
    assert female["lower"] == pytest.approx(0.3)
    assert dining.targets(Metric.ES, OVERALL, GENDER)["upper"] == pytest.approx(0.35)


def test_non_recipients_answer_zero(specs):
    population = VoucherPopulation.non_recipient(VoucherKind.SPORTS, n_brackets=8, extra_size=10)
    ds, truth = generate(gender_spec(population, cell_size=30), specs)
    originals = ds.of_kind(VoucherKind.SPORTS, (Wave.ORIGINAL,))
    assert len(originals) == 60
    assert all(r.triggered and r.bracket_index == 0 for r in ds.records)
    sports = truth[VoucherKind.SPORTS]
    assert set(sports.es_true.values()) == {0.0}
    assert set(sports.ic_observed.values()) == {0.0}
    assert sports.it_true == 0.0


def test_empty_stratum_is_recorded(tmp_path, specs):
    spec = gender_spec(dining_population(cell_sizes={"gender=female": 0}), cell_size=40)
    ds, truth = generate(spec, specs)
    assert ds.n_k(VoucherKind.DINING) == 40
    assert truth.empty_strata() == {"dining": ["gender=female"]}
    payload = json.loads(write_ground_truth(truth, GENDER, tmp_path / "truth.json").read_text(encoding="utf-8"))
    assert payload["empty_strata"] == {"dining": ["gender=female"]}
    assert payload["vouchers"]["dining"]["cells"]["gender=female"] == {"n": 0}


def test_simulated_files_ingest_back(tmp_path, specs):
    spec = load_population()
    survey_path, truth_path = simulate(spec, tmp_path, specs)
    expected, _ = generate(spec, specs)
    assert ingest(survey_path, specs) == expected
    payload = json.loads(truth_path.read_text(encoding="utf-8"))
    assert payload["seed"] == 1
    assert set(payload["vouchers"]) == {k.value for k in VoucherKind}


def test_estimates_approach_observed_targets(specs):
    spec = gender_spec(dining_population(bias=0.1, shift=0.1), cell_size=20000, seed=8)
    ds, truth = generate(spec, specs)
    records = ds.of_kind(VoucherKind.DINING, (Wave.ORIGINAL,))
    targets = truth[VoucherKind.DINING]
    es = targets.targets(Metric.ES, OVERALL, GENDER)
    ic = targets.targets(Metric.IC, OVERALL, GENDER)
    assert abs(substitution_rate(records).value - es["upper"]) < 0.02
    assert abs(induced_rate(records, specs[VoucherKind.DINING]).value - ic["upper"]) < 0.02
    assert es["upper"] == pytest.approx(es["true"] + 0.1)


def test_out_of_range_probabilities_rejected(specs):
    population = dining_population(bias=0.6)
    with pytest.raises(ConfigurationError, match="leaves"):
        PopulationSimulator(gender_spec(population), specs).generate()


def test_coverage_needs_enough_trials(specs):
    with pytest.raises(ConfigurationError, match="at least 100"):
        coverage_experiment(gender_spec(dining_population()), BootstrapConfig(replications=50), trials=10, specs=specs)


def test_interval_coverage_is_near_nominal(specs):
    spec = gender_spec(dining_population(bias=0.05), cell_size=200, seed=5)
    frame = coverage_experiment(
        spec, BootstrapConfig(replications=400, seed=2), trials=100, metrics=(Metric.ES,), specs=specs
    )
    overall = frame[frame["group"] == "overall"].set_index("interval")["coverage"]
    assert set(overall.index) == {"ci_lower", "ci_upper", "combined"}
    assert 0.85 <= overall["ci_upper"] <= 1.0
    assert 0.85 <= overall["ci_lower"] <= 1.0
    assert set(frame["trials"]) == {100}


def test_point_mass_population_always_covers(specs):
    population = VoucherPopulation.non_recipient(VoucherKind.DINING, n_brackets=8)
    frame = coverage_experiment(
        gender_spec(population, cell_size=20), BootstrapConfig(replications=50, seed=1), trials=100, specs=specs
    )
    assert len(frame) == 2 * 3 * 3
    assert (frame["coverage"] == 1.0).all()


@pytest.mark.slow
def test_interval_coverage_at_full_scale(specs):
    spec = gender_spec(dining_population(bias=0.05), cell_size=500, seed=11)
    frame = coverage_experiment(
        spec, BootstrapConfig(replications=1000, seed=4), trials=500, metrics=(Metric.ES,), specs=specs
    )
    overall = frame[frame["group"] == "overall"].set_index("interval")["coverage"]
    assert 0.92 <= overall["ci_upper"] <= 0.98
    assert 0.90 <= overall["ci_lower"] <= 0.99
