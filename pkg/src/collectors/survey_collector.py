"""Survey file ingestion, stratification and bracket midpoints"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import pandas as pd

from collectors.models import (
    OVERALL,
    BracketSchedule,
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
from config.errors import ConfigurationError, EstimationError, RowError, SurveyValidationError
from config.settings import (
    AGE_BANDS,
    GENDERS,
    RESIDENCES,
    SURVEY_COLUMNS,
    TRIGGERED_ANSWERS,
    VOUCHER_CONFIG,
)

logger = logging.getLogger(__name__)


def load_voucher_specs(path=VOUCHER_CONFIG) -> Dict[VoucherKind, VoucherSpec]:
    """Read the voucher configuration file into one VoucherSpec per kind."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read voucher config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"voucher config {path} is not valid JSON: {e}") from e

    specs = {}
    for entry in payload.get("vouchers", []):
        try:
            kind = VoucherKind.parse(entry["kind"])
            spec = VoucherSpec(
                kind=kind,
                face_value_original=float(entry["face_value_original"]),
                face_value_extra=float(entry["face_value_extra"]),
                schedule=BracketSchedule.from_bounds(entry["brackets"]),
                target_sector=int(entry["target_sector"]),
                recipients=entry.get("recipients"),
            )
        except KeyError as e:
            raise ConfigurationError(f"voucher config entry {entry.get('kind', '?')} is missing {e}") from e
        except ConfigurationError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"voucher config entry {entry.get('kind', '?')}: {e}") from e
        if kind in specs:
            raise ConfigurationError(f"voucher kind '{kind.value}' configured twice")
        specs[kind] = spec

    if not specs:
        raise ConfigurationError(f"voucher config {path} lists no vouchers")
    logger.debug(f"Loaded {len(specs)} voucher specs from {path}")
    return specs


def midpoint(schedule: BracketSchedule, c: int) -> float:
    """Imputed NT$ amount for bracket ``c``: 0 for none, mean of bounds, lower bound at the top."""
    if not 0 <= c < schedule.count:
        raise EstimationError(f"bracket index {c} out of range for a {schedule.count}-bracket schedule")
    bracket = schedule.brackets[c]
    if c == 0:
        return 0.0
    if bracket.hi is None:
        return float(bracket.lo)
    return (bracket.lo + bracket.hi) / 2


def midpoints(schedule: BracketSchedule) -> List[float]:
    """Midpoint of every bracket in order"""
    return [midpoint(schedule, c) for c in range(schedule.count)]


@dataclass(frozen=True)
class Stratum:
    key: GroupKey
    records: Tuple[SurveyRecord, ...]

    @property
    def size(self) -> int:
        """Number of records in the stratum"""
        return len(self.records)

    @property
    def empty(self) -> bool:
        """True when the stratum has no records"""
        return not self.records

    @property
    def label(self) -> str:
        """Printable group label"""
        return group_label(self.key)


def stratify(
    ds: Dataset,
    scheme: StratificationScheme,
    k: VoucherKind,
    waves: Iterable[Wave] = tuple(Wave),
) -> List[Stratum]:
    """Partition the voucher-k records into the scheme's groups.

    Every group of the scheme is returned, empty ones included (``Stratum.empty``);
    a voucher with no records yields an empty list.
    """
    records = ds.of_kind(k, waves)
    if not records:
        return []
    buckets = {key: [] for key in scheme.all_groups()}
    for record in records:
        buckets[scheme.group_of(record)].append(record)
    strata = [Stratum(key, tuple(members)) for key, members in buckets.items()]
    empty = [s.label for s in strata if s.empty]
    if empty:
        logger.info(f"{k.value}: {len(empty)} empty stratum/strata: {', '.join(empty)}")
    return strata


def select(records: Iterable[SurveyRecord], scheme: StratificationScheme, key: GroupKey) -> List[SurveyRecord]:
    """Records belonging to a (possibly coarser) reporting group."""
    if key == OVERALL:
        return list(records)
    return [r for r in records if all(scheme.coarse_value(dim, r.profile) == value for dim, value in key)]


class SurveyCollector:
    """Reads survey files into validated datasets"""

    def __init__(self, specs: Dict[VoucherKind, VoucherSpec]):
        self.logger = logging.getLogger(__name__)
        self.specs = specs

    def ingest(self, source) -> Dataset:
        """Validate every row of ``source`` (path, file object or DataFrame) and build a Dataset."""
        frame = self._read(source)
        errors: List[RowError] = []
        records: List[SurveyRecord] = []
        seen = {}

        for offset, row in enumerate(frame.to_dict("records")):
            line = offset + 2  # header is line 1
            record = self._parse_row(row, line, errors)
            if record is None:
                continue
            if record.key in seen:
                errors.append(
                    RowError(line, "respondent_id", f"duplicate (respondent, voucher, wave) pair, first seen on row {seen[record.key]}")
                )
                continue
            seen[record.key] = line
            records.append(record)

        if errors:
            self.logger.warning(f"Survey rejected: {len(errors)} invalid row(s)")
            raise SurveyValidationError(errors)

        ds = Dataset(tuple(records))
        self.logger.info(f"Ingested {len(ds)} survey records across {len(ds.kinds_present())} voucher type(s)")
        return ds

    def _read(self, source) -> pd.DataFrame:
        """Read the survey CSV as strings and check the header"""
        if isinstance(source, pd.DataFrame):
            frame = source.astype(str)
        else:
            try:
                frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
            except pd.errors.EmptyDataError:
                raise SurveyValidationError([], header_problem="file is empty; a header row is required") from None
            except pd.errors.ParserError as e:
                raise SurveyValidationError([], header_problem=f"unparseable CSV: {e}") from None
            except UnicodeDecodeError as e:
                raise SurveyValidationError([], header_problem=f"file is not valid UTF-8: {e}") from None
        columns = [str(c).strip() for c in frame.columns]
        frame.columns = columns
        missing = [c for c in SURVEY_COLUMNS if c not in columns]
        if missing:
            raise SurveyValidationError(
                [], header_problem=f"missing header row or column(s): {', '.join(missing)}"
            )
        return frame

    def _parse_row(self, row: dict, line: int, errors: List[RowError]) -> Optional[SurveyRecord]:
        """Parse one row, appending any problems to errors"""
        before = len(errors)
        value = {c: str(row.get(c, "")).strip() for c in SURVEY_COLUMNS}

        respondent_id = value["respondent_id"]
        if not respondent_id:
            errors.append(RowError(line, "respondent_id", "missing respondent id"))

        kind = spec = None
        try:
            kind = VoucherKind.parse(value["voucher_type"])
            spec = self.specs.get(kind)
            if spec is None:
                errors.append(RowError(line, "voucher_type", f"no voucher configuration for '{kind.value}'"))
        except ValueError as e:
            errors.append(RowError(line, "voucher_type", str(e)))

        demographics = {}
        for field, allowed in (("gender", GENDERS), ("residence", RESIDENCES), ("age_band", AGE_BANDS)):
            answer = value[field].lower()
            if answer in allowed:
                demographics[field] = answer
            else:
                errors.append(RowError(line, field, f"'{value[field]}' not one of {', '.join(allowed)}"))

        triggered = TRIGGERED_ANSWERS.get(value["triggered"].lower())
        if triggered is None:
            errors.append(RowError(line, "triggered", f"expected yes|no, got '{value['triggered']}'"))

        bracket_index = None
        try:
            bracket_index = int(value["bracket_index"])
        except ValueError:
            errors.append(RowError(line, "bracket_index", f"not an integer: '{value['bracket_index']}'"))
        if bracket_index is not None and spec is not None:
            if not 0 <= bracket_index < spec.schedule.count:
                errors.append(
                    RowError(
                        line,
                        "bracket_index",
                        f"bracket index out of range: {bracket_index} not in [0, {spec.schedule.count - 1}]",
                    )
                )

        wave = None
        try:
            wave = Wave(value["wave"].lower())
        except ValueError:
            errors.append(RowError(line, "wave", f"expected original|extra, got '{value['wave']}'"))

        if len(errors) > before:
            return None
        return SurveyRecord(
            respondent_id=respondent_id,
            voucher=kind,
            profile=DemographicProfile(**demographics),
            triggered=triggered,
            bracket_index=bracket_index,
            wave=wave,
        )


def ingest(source, specs: Dict[VoucherKind, VoucherSpec]) -> Dataset:
    """Validate a survey file or frame into a Dataset"""
    return SurveyCollector(specs).ingest(source)


def to_frame(ds: Dataset) -> pd.DataFrame:
    """Dataset as a frame in survey column order"""
    rows = [
        {
            "respondent_id": r.respondent_id,
            "voucher_type": r.voucher.value,
            "gender": r.profile.gender,
            "residence": r.profile.residence,
            "age_band": r.profile.age_band,
            "triggered": "yes" if r.triggered else "no",
            "bracket_index": r.bracket_index,
            "wave": r.wave.value,
        }
        for r in ds.records
    ]
    return pd.DataFrame(rows, columns=list(SURVEY_COLUMNS))


def write_survey(ds: Dataset, path) -> Path:
    """Serialize a Dataset in the survey file schema (UTF-8, LF)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    to_frame(ds).to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    logger.info(f"Wrote {len(ds)} survey records to {path}")
    return path


def sample_structure(ds: Dataset, scheme: StratificationScheme, waves: Iterable[Wave] = (Wave.ORIGINAL,)) -> pd.DataFrame:
    """Respondent counts per voucher and demographic column, with percentages of each row."""
    waves = tuple(waves)
    groups = scheme.marginal_groups()
    total_records = sum(len(ds.of_kind(k, waves)) for k in VoucherKind)
    rows = []
    for kind in VoucherKind:
        records = ds.of_kind(kind, waves)
        row = {"voucher": kind.value}
        for key in groups:
            row[group_label(key)] = len(select(records, scheme, key))
        row["overall"] = len(records)
        row["share_of_sample"] = len(records) / total_records if total_records else 0.0
        rows.append(row)
    return pd.DataFrame(rows)
