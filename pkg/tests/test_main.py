from __future__ import annotations

import json
import logging

import pytest

import main
from reporting.reports import read_report

HEADER = "respondent_id,voucher_type,gender,residence,age_band,triggered,bracket_index,wave"


@pytest.fixture(autouse=True)
def release_warnings():
    yield
    logging.captureWarnings(False)


@pytest.fixture(scope="module")
def survey(tmp_path_factory):
    out = tmp_path_factory.mktemp("simulated")
    assert main.main(["simulate", "--out-dir", str(out)]) == main.EXIT_OK
    return out / "survey.csv"


def write_survey(tmp_path, *rows, header=HEADER):
    path = tmp_path / "survey.csv"
    path.write_text("\n".join(([header] if header else []) + list(rows)) + "\n", encoding="utf-8")
    return path


def gender_rows(genders=("male", "female"), n=10):
    return [
        f"{g}{i},dining,{g},taipei,30_39,{'no' if i % 3 == 0 else 'yes'},{i % 8},original"
        for g in genders
        for i in range(n)
    ]


def test_simulated_survey_validates(survey, capsys):
    assert main.main(["validate", str(survey)]) == main.EXIT_OK
    assert capsys.readouterr().out.strip().endswith("records, 0 errors")
    sidecar = json.loads((survey.parent / "ground_truth.json").read_text(encoding="utf-8"))
    assert sidecar["seed"] == 1
    assert (survey.parent / "manifest.json").exists()


def test_bad_bracket_is_reported(tmp_path, capsys):
    path = write_survey(tmp_path, "a,dining,male,taipei,20_29,yes,0,original", "b,dining,male,taipei,20_29,yes,8,original")
    assert main.main(["validate", str(path)]) == main.EXIT_VALIDATION
    out = capsys.readouterr().out
    assert "row 3" in out
    assert "bracket index out of range" in out
    assert out.strip().endswith("1 errors")


def test_missing_header(tmp_path, capsys):
    path = write_survey(tmp_path, "a,dining,male,taipei,20_29,yes,0,original", header=None)
    assert main.main(["validate", str(path)]) == main.EXIT_VALIDATION
    assert "missing header row" in capsys.readouterr().out


def test_missing_file_is_a_configuration_error(tmp_path):
    assert main.main(["validate", str(tmp_path / "absent.csv")]) == main.EXIT_CONFIG
    assert main.main(["estimate", str(tmp_path / "absent.csv"), "--out-dir", str(tmp_path)]) == main.EXIT_CONFIG


def test_estimate_by_gender(tmp_path, capsys):
    path = write_survey(tmp_path, *gender_rows())
    out = tmp_path / "out"
    assert main.main(["estimate", str(path), "--group-by", "gender", "--out-dir", str(out)]) == main.EXIT_OK
    assert "treatment intensity omitted" in capsys.readouterr().out
    estimates = read_report(out / "estimates.csv")
    es = estimates[(estimates["metric"] == "es") & (estimates["group"] != "overall")]
    assert sorted(es["group"]) == ["gender=female", "gender=male"]
    for name in ("sample_structure.csv", "bounds.csv", "bounds.txt", "manifest.json"):
        assert (out / name).exists()


def bootstrap(survey, out, *extra):
    return main.main(["bootstrap", str(survey), "--replications", "50", "--out-dir", str(out), *extra])


def test_bootstrap_is_reproducible(survey, tmp_path):
    first, again, parallel = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert bootstrap(survey, first, "--seed", "7") == main.EXIT_OK
    assert bootstrap(survey, again, "--seed", "7") == main.EXIT_OK
    assert bootstrap(survey, parallel, "--seed", "7", "--workers", "2") == main.EXIT_OK
    expected = (first / "confidence_regions.csv").read_bytes()
    assert (again / "confidence_regions.csv").read_bytes() == expected
    assert (parallel / "confidence_regions.csv").read_bytes() == expected
    for name in ("intensity_intervals.csv", "plot_data.csv", "intervals_es.html", "derived_scenarios.json"):
        assert (first / name).exists()


def test_bootstrap_seed_from_environment(survey, tmp_path, monkeypatch):
    monkeypatch.setenv("VOUCHER_SEED", "7")
    assert bootstrap(survey, tmp_path) == main.EXIT_OK
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 7
    assert manifest["replications"] == 50


def test_too_few_replications_warn(tmp_path, caplog):
    path = write_survey(tmp_path, *gender_rows())
    args = ["bootstrap", str(path), "--group-by", "gender", "--replications", "10", "--out-dir", str(tmp_path / "out")]
    with caplog.at_level(logging.WARNING):
        assert main.main(args) == main.EXIT_OK
    assert "percentile resolution" in caplog.text


def test_empty_stratum_is_a_numerical_failure(tmp_path, caplog):
    path = write_survey(tmp_path, *gender_rows(genders=("male",)))
    args = ["bootstrap", str(path), "--group-by", "gender", "--replications", "50", "--out-dir", str(tmp_path / "out")]
    assert main.main(args) == main.EXIT_NUMERIC
    assert "gender=female" in caplog.text


def test_impact_of_shipped_scenarios(tmp_path, capsys):
    assert main.main(["impact", "--out-dir", str(tmp_path)]) == main.EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    multipliers = {line.split(":")[0]: float(line.rsplit(" ", 1)[1]) for line in lines}
    assert multipliers == pytest.approx({"baseline": 0.969, "pessimistic": 1.143, "optimistic": 1.761}, abs=0.002)
    impact = read_report(tmp_path / "impact.csv").set_index("sector")
    assert "difference_optimistic" in impact.columns
    assert (tmp_path / "sector_multipliers.csv").exists()


def test_derived_scenarios_feed_the_impact_model(survey, tmp_path, capsys):
    boot = tmp_path / "boot"
    assert bootstrap(survey, boot, "--seed", "3") == main.EXIT_OK
    derived = boot / "derived_scenarios.json"
    labels = [s["label"] for s in json.loads(derived.read_text(encoding="utf-8"))["scenarios"]]
    assert labels == ["baseline", "pessimistic", "optimistic"]
    capsys.readouterr()
    assert main.main(["impact", "--scenarios", str(derived), "--out-dir", str(tmp_path / "impact")]) == main.EXIT_OK
    assert len(capsys.readouterr().out.strip().splitlines()) == 3


def test_unmapped_voucher_is_a_configuration_error(tmp_path):
    from config import settings

    payload = json.loads(settings.VOUCHER_CONFIG.read_text(encoding="utf-8"))
    payload["vouchers"] = [v for v in payload["vouchers"] if v["kind"] != "sports"]
    config = tmp_path / "vouchers.json"
    config.write_text(json.dumps(payload), encoding="utf-8")
    assert main.main(["impact", "--config", str(config), "--out-dir", str(tmp_path / "out")]) == main.EXIT_CONFIG


def test_non_utf8_survey_fails_validation(tmp_path, capsys):
    path = tmp_path / "survey.csv"
    path.write_bytes((HEADER + "\n").encode("utf-8") + b"a\xff,dining,male,taipei,20_29,yes,0,original\n")
    assert main.main(["validate", str(path)]) == main.EXIT_VALIDATION
    assert "not valid UTF-8" in capsys.readouterr().out
    assert main.main(["estimate", str(path), "--out-dir", str(tmp_path / "out")]) == main.EXIT_VALIDATION


@pytest.mark.parametrize("seed", ["-1", str(2**64)])
def test_out_of_range_seed_is_a_configuration_error(survey, tmp_path, seed):
    assert bootstrap(survey, tmp_path, "--seed", seed) == main.EXIT_CONFIG


def test_malformed_environment_defaults(survey, tmp_path, monkeypatch):
    monkeypatch.setenv("VOUCHER_SEED", "seven")
    assert bootstrap(survey, tmp_path / "a") == main.EXIT_CONFIG
    monkeypatch.setenv("VOUCHER_SEED", "-5")
    assert bootstrap(survey, tmp_path / "b") == main.EXIT_CONFIG
    monkeypatch.setenv("VOUCHER_SEED", "7")
    monkeypatch.setenv("VOUCHER_WORKERS", "many")
    assert bootstrap(survey, tmp_path / "c") == main.EXIT_CONFIG


def test_simulate_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("VOUCHER_SEED", "42")
    assert main.main(["simulate", "--out-dir", str(tmp_path)]) == main.EXIT_OK
    assert json.loads((tmp_path / "ground_truth.json").read_text(encoding="utf-8"))["seed"] == 42
    assert main.main(["simulate", "--seed", "-1", "--out-dir", str(tmp_path / "neg")]) == main.EXIT_CONFIG
