import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT))

from collectors.models import DemographicProfile, SurveyRecord, VoucherKind, Wave  # noqa: E402
from collectors.survey_collector import load_voucher_specs  # noqa: E402


@pytest.fixture(scope="session")
def specs():
    return load_voucher_specs()


def make_record(respondent_id, voucher=VoucherKind.DINING, gender="male", residence="taipei",
                age_band="30_39", triggered=True, bracket_index=0, wave=Wave.ORIGINAL):
    return SurveyRecord(
        respondent_id=str(respondent_id),
        voucher=voucher,
        profile=DemographicProfile(gender, residence, age_band),
        triggered=triggered,
        bracket_index=bracket_index,
        wave=wave,
    )


@pytest.fixture
def record_factory():
    return make_record
