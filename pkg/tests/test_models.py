from __future__ import annotations

import pytest

from collectors.models import (
    OVERALL,
    BracketSchedule,
    Dataset,
    StratificationScheme,
    VoucherKind,
    VoucherSpec,
    Wave,
    group_label,
    parse_waves,
)
from collectors.survey_collector import midpoint, midpoints, stratify
from config.errors import ConfigurationError, EstimationError
from conftest import make_record


def test_six_voucher_kinds_in_fixed_order():
    assert [k.value for k in VoucherKind] == [
        "accommodation",
        "dining",
        "cultural",
        "sports",
        "market",
        "agricultural",
    ]
    assert [k.order for k in VoucherKind] == list(range(6))


def test_parse_voucher_kind():
    assert VoucherKind.parse(" Dining ") is VoucherKind.DINING
    with pytest.raises(ValueError, match="unknown voucher kind 'hotel'"):
        VoucherKind.parse("hotel")


@pytest.mark.parametrize(
    "bounds, message",
    [
        ([[0, 0]], "at least two"),
        ([[1, 10], [11, None]], "first bracket"),
        ([[0, 0], [1, 10]], "open-ended"),
        ([[0, 0], [1, 10], [10, None]], "overlap"),
        ([[0, 0], [1, 10], [20, None]], "not contiguous"),
        ([[0, 0], [1, None], [20, None]], "only the last"),
    ],
)
def test_schedule_rejects_malformed_brackets(bounds, message):
    with pytest.raises(ConfigurationError, match=message):
        BracketSchedule.from_bounds(bounds)


def test_midpoint_rule(specs):
    dining = specs[VoucherKind.DINING].schedule
    accommodation = specs[VoucherKind.ACCOMMODATION].schedule
    assert midpoint(dining, 4) == 375.5
    assert midpoint(dining, 0) == 0.0
    assert midpoint(accommodation, 0) == 0.0
    assert midpoint(accommodation, accommodation.count - 1) == 20001.0


def test_midpoint_out_of_range(specs):
    with pytest.raises(EstimationError):
        midpoint(specs[VoucherKind.DINING].schedule, 8)


def test_midpoints_strictly_increase(specs):
    for spec in specs.values():
        mids = midpoints(spec.schedule)
        assert mids[0] == 0.0
        assert all(a < b for a, b in zip(mids[1:], mids[2:]))


def test_scaled_schedule_doubles_midpoints(specs):
    schedule = specs[VoucherKind.DINING].schedule
    doubled = schedule.scaled(2)
    assert not doubled.contiguous
    assert midpoints(doubled) == [2 * m for m in midpoints(schedule)]


def test_voucher_spec_invariants(specs):
    schedule = specs[VoucherKind.DINING].schedule
    with pytest.raises(ConfigurationError, match="original > extra"):
        VoucherSpec(VoucherKind.DINING, 100, 500, schedule, 11)
    with pytest.raises(ConfigurationError, match="target sector"):
        VoucherSpec(VoucherKind.DINING, 500, 100, schedule, 20)


def test_shipped_voucher_config(specs):
    assert set(specs) == set(VoucherKind)
    assert specs[VoucherKind.ACCOMMODATION].face_value_original == 1000
    assert specs[VoucherKind.ACCOMMODATION].face_value_extra == 500
    assert specs[VoucherKind.ACCOMMODATION].target_sector == 13
    assert specs[VoucherKind.MARKET].target_sector == 11
    assert specs[VoucherKind.SPORTS].target_sector == 18


def test_finest_scheme_has_twelve_cells_and_seven_marginals():
    scheme = StratificationScheme()
    assert scheme.J == 12
    assert [group_label(g) for g in scheme.marginal_groups()] == [
        "gender=male",
        "gender=female",
        "residence=taipei",
        "residence=other_cities",
        "age=under_30",
        "age=30_49",
        "age=over_49",
    ]
    assert scheme.raw_values("residence", "other_cities") == ["northern_adjacent", "other"]


def test_unknown_dimension_rejected():
    with pytest.raises(ConfigurationError, match="income"):
        StratificationScheme(("income",))


def test_stratify_by_gender():
    ds = Dataset(
        (
            make_record(1, gender="male"),
            make_record(2, gender="male"),
            make_record(3, gender="male"),
            make_record(4, gender="female"),
        )
    )
    strata = stratify(ds, StratificationScheme(("gender",)), VoucherKind.DINING)
    assert [(s.label, s.size) for s in strata] == [("gender=male", 3), ("gender=female", 1)]


def test_finest_partition_sums_to_voucher_count():
    ages = ["under_20", "20_29", "30_39", "40_49", "50_59", "60_plus"]
    residences = ["taipei", "northern_adjacent", "other"]
    records = [
        make_record(i, gender="male" if i % 2 else "female", residence=residences[i % 3], age_band=ages[i % 6])
        for i in range(50)
    ]
    ds = Dataset(tuple(records))
    scheme = StratificationScheme()
    strata = stratify(ds, scheme, VoucherKind.DINING)
    assert len(strata) == 12
    assert sum(s.size for s in strata) == ds.n_k(VoucherKind.DINING) == 50
    assert sum(ds.n_jk(scheme, VoucherKind.DINING).values()) == 50
    keys = [r.key for s in strata for r in s.records]
    assert len(keys) == len(set(keys))


def test_stratify_without_records_is_empty():
    ds = Dataset((make_record(1),))
    assert stratify(ds, StratificationScheme(), VoucherKind.SPORTS) == []


def test_wave_filter():
    assert parse_waves("original") == (Wave.ORIGINAL,)
    assert parse_waves("all") == (Wave.ORIGINAL, Wave.EXTRA)
    with pytest.raises(ConfigurationError):
        parse_waves("second")


def test_overall_label():
    assert group_label(OVERALL) == "overall"
