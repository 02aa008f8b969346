"""Exception types shared across the analyzer"""

from dataclasses import dataclass


class VoucherAnalysisError(ValueError):
    """Base class for every error the analyzer raises on purpose"""


@dataclass(frozen=True)
class RowError:
    row: int
    field: str
    message: str

    def __str__(self):
        return f"row {self.row}: {self.field}: {self.message}"


class SurveyValidationError(VoucherAnalysisError):
    """Survey input failed schema or invariant checks"""

    def __init__(self, errors, header_problem=None):
        self.errors = list(errors)
        self.header_problem = header_problem
        if header_problem:
            summary = f"header: {header_problem}"
        else:
            summary = f"{len(self.errors)} invalid row(s); first: {self.errors[0]}" if self.errors else "invalid survey"
        super().__init__(summary)


class ConfigurationError(VoucherAnalysisError):
    """A configuration file or flag is unusable"""


class EstimationError(VoucherAnalysisError):
    """An estimate is undefined for the data supplied"""


class TableValidationError(VoucherAnalysisError):
    """A sector table violates the Leontief inverse invariants"""


class NumericalError(VoucherAnalysisError):
    """Linear algebra failed or lost too much precision"""
