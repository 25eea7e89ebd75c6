"""Exception hierarchy shared by the library and the CLI.

The CLI maps these onto process exit codes, so every error raised from
library code should derive from :class:`OtadpError`.
"""


class OtadpError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(OtadpError, ValueError):
    """Invalid configuration: bad field, unknown key, inconsistent sizes."""

    exit_code = 2


class DomainError(OtadpError, ValueError):
    """Input outside the mathematical domain of an operation."""

    exit_code = 3


class NumericError(OtadpError, ArithmeticError):
    """A linear solve or factorization failed or lost too much accuracy."""

    exit_code = 3


class IllConditionedChannelError(NumericError):
    """A prosumer's effective gain through the combiner is too small to equalize."""

    def __init__(self, prosumer: int, gain: float):
        self.prosumer = prosumer
        self.gain = gain
        super().__init__(
            f"prosumer {prosumer} is unreachable through the combiner "
            f"(|f0^H h| = {gain:.3e})"
        )


class UnrecoverableError(NumericError):
    """Effective combining gain is zero, so a bid cannot be normalized."""


class InfeasibleError(OtadpError):
    """A calibration target cannot be met within the search budget."""

    exit_code = 3


class NonMonotoneError(NumericError):
    """Evaluations contradicted the monotonicity a bisection relies on."""


class DivergenceError(OtadpError):
    """The iteration is outside its convergent regime."""

    exit_code = 4


class BidOverflowError(DivergenceError):
    """A bid left the encodable range [-L, L] under the ``error`` policy."""

    def __init__(self, iteration: int, prosumer: int, bid: float, bound: float):
        self.iteration = iteration
        self.prosumer = prosumer
        self.bid = bid
        self.bound = bound
        super().__init__(
            f"bid overflow at iteration {iteration}, prosumer {prosumer}: "
            f"|{bid:.6g}| > L={bound:.6g}"
        )
