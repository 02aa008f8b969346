"""Conservative bias correction: lower/upper bounds from the smallest subgroup estimate"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from collectors.models import OVERALL, GroupKey, group_label
from config.errors import EstimationError


@dataclass(frozen=True)
class BoundedEstimate:
    group: GroupKey
    point: float
    bias_bound: float
    lower: float
    upper: float

    @property
    def group_label(self) -> str:
        """Printable group label"""
        return group_label(self.group)


def bias_bound(group_estimates: Sequence[Tuple[GroupKey, float]]) -> float:
    """Most conservative bias estimate: the minimum group estimate."""
    if not group_estimates:
        raise EstimationError("bias bound needs at least one group estimate")
    return min(value for _, value in group_estimates)


def bound(key: GroupKey, point: float, b_hat: float) -> BoundedEstimate:
    """Bounded estimate from a point estimate and the shared bias bound"""
    return BoundedEstimate(group=key, point=point, bias_bound=b_hat, lower=point - b_hat, upper=point)


def bounded_estimates(
    group_estimates: Sequence[Tuple[GroupKey, float]],
    overall_estimate: float,
    reporting: Optional[Sequence[Tuple[GroupKey, float]]] = None,
) -> List[BoundedEstimate]:
    """Bounds for each finest group, any coarser reporting groups, then the overall estimate.

    The same bias bound, taken over the finest groups, applies to every row.
    """
    b_hat = bias_bound(group_estimates)
    rows = [bound(key, value, b_hat) for key, value in group_estimates]
    rows.extend(bound(key, value, b_hat) for key, value in (reporting or ()))
    rows.append(bound(OVERALL, overall_estimate, b_hat))
    return rows
