"""Exception hierarchy for piezobeam.

Configuration problems derive from ConfigError and map to exit status 1;
numerical failures derive from NumericalError and map to exit status 2.
"""


class PiezoBeamError(Exception):
    """Base class for all piezobeam errors."""


class ConfigError(PiezoBeamError):
    """Invalid parameters, run configuration or input files."""

    def __init__(self, message, key_path=None):
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)


class InvalidParameter(ConfigError):
    """A physical or numerical parameter is outside its admissible range."""


class NonPositiveAlpha1(InvalidParameter):
    """alpha - gamma^2 * beta is not strictly positive."""


class ZeroGain(InvalidParameter):
    """A feedback amplifier is zero where the decay estimates require k1, k2 > 0."""


class FileFormat(ConfigError):
    """A user supplied file could not be parsed."""


class SchemeMismatch(ConfigError):
    """An operation was applied to a state or operator of the wrong scheme."""


class DegenerateCoupling(UserWarning):
    """gamma == 0: the coupling ratios b1, b2 are undefined."""


class NumericalError(PiezoBeamError):
    """A numerical stage failed.

    Args:
        message (str): Human readable description
        stage (str): Pipeline stage that failed (assembly, eigensolve, branches, ...)
        tag (dict): Configuration tag, e.g. scheme, N, k1, k2
    """

    def __init__(self, message, stage=None, tag=None):
        self.stage = stage
        self.tag = dict(tag) if tag else {}
        super().__init__(message)

    def __str__(self):
        text = super().__str__()
        if self.stage:
            text = f"[{self.stage}] {text}"
        if self.tag:
            details = ", ".join(f"{key}={value}" for key, value in self.tag.items())
            text = f"{text} ({details})"
        return text


class FactorizationFailure(NumericalError):
    """A Cholesky factorization of a stiffness or mass form failed."""


class EigensolverFailure(NumericalError):
    """The dense eigensolver did not converge or returned an unusable spectrum."""


class BranchImbalance(NumericalError):
    """Branch labeling did not produce 2(N+1) pairs per branch."""


class AmbiguousMatch(NumericalError):
    """Two eigenvectors matched the same probe eigenvector within the tie tolerance."""


class UnlabeledSpectrum(NumericalError):
    """A filter was requested on a spectrum without branch labels."""


class IllConditionedBasis(NumericalError):
    """The eigenvector basis is too ill-conditioned for a reliable projection."""


class SingularSystem(NumericalError):
    """The implicit midpoint matrix is numerically singular."""


class NonPositiveEnergy(NumericalError):
    """An energy sample in a fit window is not strictly positive."""


class DegenerateWindow(NumericalError):
    """A fit window contains too few samples."""


class NoPlateau(NumericalError):
    """A filter sweep never reaches a plateau."""


class InsufficientLevels(NumericalError):
    """A convergence study needs at least three grid levels."""


class GoldenMismatch(PiezoBeamError):
    """Reproduced values differ from the published ones beyond tolerance."""

    def __init__(self, message, rows=None):
        self.rows = list(rows or [])
        super().__init__(message)


EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_GOLDEN = 3


def exit_code_for(error):
    """Map an exception onto the CLI exit status."""
    if isinstance(error, GoldenMismatch):
        return EXIT_GOLDEN
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL
