"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericError -> 3. Plain ValueError/TypeError from library functions
indicate API misuse, not bad user data, and are allowed to propagate.
"""


class UsageError(Exception):
    """Bad invocation: unknown subcommand, unknown config key, malformed override."""


class DataError(Exception):
    """Input data is missing, malformed, or inconsistent."""


class UndefinedMetricError(DataError):
    """Metric is undefined for the given inputs (e.g. single-class ground truth)."""


class NumericError(RuntimeError):
    """Numeric failure during computation (NaN/Inf loss abort)."""
