"""Survey data model: vouchers, bracket schedules, respondents and datasets"""

import itertools
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from config.errors import ConfigurationError
from config.settings import (
    AGE_BANDS,
    COARSENING,
    DIMENSION_FIELDS,
    FINEST_DIMENSIONS,
    GENDERS,
    RESIDENCES,
    SECTOR_COUNT,
    VOUCHER_KINDS,
)


class VoucherKind(str, Enum):
    """The six program voucher types; declaration order is the reporting order."""

    ACCOMMODATION = "accommodation"
    DINING = "dining"
    CULTURAL = "cultural"
    SPORTS = "sports"
    MARKET = "market"
    AGRICULTURAL = "agricultural"

    @property
    def order(self) -> int:
        """Position in survey order"""
        return VOUCHER_KINDS.index(self.value)

    @classmethod
    def parse(cls, text: str) -> "VoucherKind":
        """Voucher kind from a survey answer"""
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ValueError(f"unknown voucher kind '{text}'") from None


class Wave(str, Enum):
    ORIGINAL = "original"
    EXTRA = "extra"


@dataclass(frozen=True)
class Bracket:
    lo: int
    hi: Optional[int]  # None marks the open-ended top bracket

    @property
    def label(self) -> str:
        """Printable label"""
        if self.lo == 0 and self.hi == 0:
            return "No additional spending"
        if self.hi is None:
            return f"More than NT${self.lo:,}"
        return f"NT${self.lo:,}-{self.hi:,}"


@dataclass(frozen=True)
class BracketSchedule:
    """Ordered spending brackets, inclusive integer NT$ ranges as printed on the questionnaire."""

    brackets: Tuple[Bracket, ...]
    contiguous: bool = True

    def __post_init__(self):
        if len(self.brackets) < 2:
            raise ConfigurationError("a bracket schedule needs at least two brackets")
        first = self.brackets[0]
        if first.lo != 0 or first.hi != 0:
            raise ConfigurationError("first bracket must be the 'no additional spending' bracket [0, 0]")
        if self.brackets[-1].hi is not None:
            raise ConfigurationError("last bracket must be open-ended")
        for prev, cur in zip(self.brackets, self.brackets[1:]):
            if prev.hi is None:
                raise ConfigurationError("only the last bracket may be open-ended")
            if cur.lo <= prev.hi:
                raise ConfigurationError(f"brackets overlap at NT${prev.hi} -> NT${cur.lo}")
            if self.contiguous and cur.lo != prev.hi + 1:
                raise ConfigurationError(f"brackets not contiguous at NT${prev.hi} -> NT${cur.lo}")
            if cur.hi is not None and cur.hi < cur.lo:
                raise ConfigurationError(f"bracket [{cur.lo}, {cur.hi}] is reversed")

    @classmethod
    def from_bounds(cls, bounds: Sequence[Sequence[Optional[int]]]) -> "BracketSchedule":
        """Schedule from [lo, hi] pairs, hi None for the open top bracket"""
        return cls(tuple(Bracket(int(lo), None if hi is None else int(hi)) for lo, hi in bounds))

    @property
    def count(self) -> int:
        """Number of brackets"""
        return len(self.brackets)

    def bounds(self) -> List[List[Optional[int]]]:
        """Brackets as [lo, hi] pairs"""
        return [[b.lo, b.hi] for b in self.brackets]

    def scaled(self, factor: int) -> "BracketSchedule":
        """Every boundary multiplied by an integer factor.

        Inclusive integer ranges cannot stay contiguous under scaling, so the
        result is a gapped schedule whose midpoints are exactly ``factor`` times
        the originals.
        """
        return BracketSchedule(
            tuple(Bracket(b.lo * factor, None if b.hi is None else b.hi * factor) for b in self.brackets),
            contiguous=False,
        )


@dataclass(frozen=True)
class VoucherSpec:
    kind: VoucherKind
    face_value_original: float
    face_value_extra: float
    schedule: BracketSchedule
    target_sector: int
    recipients: Optional[int] = None

    def __post_init__(self):
        if not self.face_value_original > self.face_value_extra > 0:
            raise ConfigurationError(
                f"{self.kind.value}: face values must satisfy original > extra > 0 "
                f"(got {self.face_value_original}, {self.face_value_extra})"
            )
        if not 1 <= self.target_sector <= SECTOR_COUNT:
            raise ConfigurationError(f"{self.kind.value}: target sector {self.target_sector} outside 1..{SECTOR_COUNT}")


@dataclass(frozen=True)
class DemographicProfile:
    gender: str
    residence: str
    age_band: str

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"unknown gender '{self.gender}'")
        if self.residence not in RESIDENCES:
            raise ValueError(f"unknown residence '{self.residence}'")
        if self.age_band not in AGE_BANDS:
            raise ValueError(f"unknown age band '{self.age_band}'")


@dataclass(frozen=True)
class SurveyRecord:
    respondent_id: str
    voucher: VoucherKind
    profile: DemographicProfile
    triggered: bool
    bracket_index: int
    wave: Wave = Wave.ORIGINAL

    @property
    def substituted(self) -> int:
        """v_ki: 1 when the purchase would have happened anyway."""
        return 0 if self.triggered else 1

    @property
    def key(self) -> Tuple[str, str, str]:
        """Uniqueness key of a response"""
        return (self.respondent_id, self.voucher.value, self.wave.value)


GroupKey = Tuple[Tuple[str, str], ...]

OVERALL: GroupKey = ()


def group_label(key: GroupKey) -> str:
    """Printable label of a group key"""
    if not key:
        return "overall"
    return "|".join(f"{dim}={value}" for dim, value in key)


@dataclass(frozen=True)
class StratificationScheme:
    """Groups records by coarsened demographic dimensions."""

    dimensions: Tuple[str, ...] = FINEST_DIMENSIONS
    coarsening: Dict[str, Dict[str, str]] = field(default_factory=lambda: COARSENING)

    def __post_init__(self):
        unknown = [d for d in self.dimensions if d not in DIMENSION_FIELDS]
        if unknown:
            raise ConfigurationError(f"unknown stratification dimension(s): {', '.join(unknown)}")
        if len(set(self.dimensions)) != len(self.dimensions):
            raise ConfigurationError("stratification dimensions must be distinct")

    def levels(self, dimension: str) -> List[str]:
        """Coarse levels of a dimension in table order"""
        seen = []
        for value in self.coarsening[dimension].values():
            if value not in seen:
                seen.append(value)
        return seen

    def coarse_value(self, dimension: str, profile: DemographicProfile) -> str:
        """Coarse level of a respondent on one dimension"""
        raw = getattr(profile, DIMENSION_FIELDS[dimension])
        return self.coarsening[dimension][raw]

    def group_of(self, record: SurveyRecord) -> GroupKey:
        """Finest group a record falls in under this scheme"""
        return tuple((dim, self.coarse_value(dim, record.profile)) for dim in self.dimensions)

    def all_groups(self) -> List[GroupKey]:
        """Every group of the scheme"""
        axes = [[(dim, level) for level in self.levels(dim)] for dim in self.dimensions]
        return [tuple(combo) for combo in itertools.product(*axes)]

    @property
    def J(self) -> int:
        """Number of strata"""
        return len(self.all_groups())

    def raw_values(self, dimension: str, coarse: str) -> List[str]:
        """Raw answers that coarsen to a level"""
        return [raw for raw, value in self.coarsening[dimension].items() if value == coarse]

    def marginal_groups(self) -> List[GroupKey]:
        """Single-dimension reporting groups in table column order."""
        return [((dim, level),) for dim in self.dimensions for level in self.levels(dim)]

    @staticmethod
    def contains(parent: GroupKey, child: GroupKey) -> bool:
        """True when child lies inside parent"""
        child_map = dict(child)
        return all(child_map.get(dim) == value for dim, value in parent)


@dataclass(frozen=True)
class Dataset:
    """Validated survey records; immutable once built."""

    records: Tuple[SurveyRecord, ...] = ()

    @cached_property
    def _by_kind(self) -> Counter:
        """Record counts per voucher kind"""
        return Counter(r.voucher for r in self.records)

    def __len__(self):
        return len(self.records)

    def n_k(self, kind: VoucherKind) -> int:
        """Records of one voucher kind across all waves"""
        return self._by_kind.get(kind, 0)

    def counts(self) -> Dict[VoucherKind, int]:
        """Record counts per voucher kind across all waves"""
        return {kind: self.n_k(kind) for kind in VoucherKind}

    def n_jk(self, scheme: StratificationScheme, kind: VoucherKind) -> Dict[GroupKey, int]:
        """Record counts per stratum for one voucher kind across all waves"""
        counts = {key: 0 for key in scheme.all_groups()}
        for record in self.of_kind(kind):
            counts[scheme.group_of(record)] += 1
        return counts

    def of_kind(self, kind: VoucherKind, waves: Iterable[Wave] = tuple(Wave)) -> List[SurveyRecord]:
        """Records of one voucher kind in the given waves"""
        allowed = set(waves)
        return [r for r in self.records if r.voucher == kind and r.wave in allowed]

    def waves_present(self, kind: Optional[VoucherKind] = None) -> set:
        """Waves with at least one record"""
        return {r.wave for r in self.records if kind is None or r.voucher == kind}

    def kinds_present(self) -> List[VoucherKind]:
        """Voucher kinds with at least one record, in survey order"""
        return [kind for kind in VoucherKind if self.n_k(kind)]


def parse_waves(option: str) -> Tuple[Wave, ...]:
    """Wave filter for the rate estimators: 'original' (default) or 'all'."""
    if option == "original":
        return (Wave.ORIGINAL,)
    if option == "all":
        return tuple(Wave)
    raise ConfigurationError(f"unknown wave filter '{option}' (expected one of: original, all)")


__all__ = [
    "Bracket",
    "BracketSchedule",
    "Dataset",
    "DemographicProfile",
    "GroupKey",
    "OVERALL",
    "StratificationScheme",
    "SurveyRecord",
    "VoucherKind",
    "VoucherSpec",
    "Wave",
    "group_label",
    "parse_waves",
]
