"""Exception hierarchy shared across the package.

Every error carries a short machine-readable ``category`` used by the CLI
to emit ``ERROR <category>: message`` lines with a stable prefix.
"""


class EbmixError(Exception):
    """Base class for all package errors."""

    category = "internal"


class ContractError(EbmixError, ValueError):
    """A precondition or invariant of the public API was violated."""

    category = "contract"


class DataError(EbmixError, ValueError):
    """Malformed input data (bad CSV row, inconsistent columns, ...)."""

    category = "data"


class NumericError(EbmixError, ArithmeticError):
    """A computation produced a non-finite or otherwise invalid value."""

    category = "numeric"


class UnsupportedError(EbmixError):
    """The requested operation is not defined for this family or model."""

    category = "unsupported"


class FitError(EbmixError):
    """Model fitting failed (all restarts diverged or errored)."""

    category = "fit"


class NoRejectionRegionError(EbmixError):
    """The fdr/FDR curve never drops below the requested level q."""

    category = "no-rejection-region"


class DegenerateRangeError(EbmixError):
    """An automatically derived parameter range collapsed to a point."""

    category = "degenerate-range"


class UsageError(EbmixError):
    """Invalid command-line flags or flag combinations."""

    category = "usage"
