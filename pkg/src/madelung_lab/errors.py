"""Exception types shared across the laboratory."""


class MadelungLabError(Exception):
    """Base class for all errors raised by this package."""


class SchemeBoundaryMismatch(MadelungLabError):
    """Spectral differentiation requested on a non-periodic grid."""


class MethodBoundaryMismatch(MadelungLabError):
    """Propagation method incompatible with the grid boundary mode."""


class NormDrift(MadelungLabError):
    """Wavefunction norm deviates from unity beyond tolerance."""


class GridTooNarrow(MadelungLabError):
    """Boundary density above threshold; the grid cannot hold the state."""


class DegenerateDensity(MadelungLabError):
    """Validity mask covers less than half of the total probability."""


class DiffusionAtZero(MadelungLabError):
    """Classical diffusion width sqrt(2 D t) is undefined at t = 0."""


class TailTruncation(MadelungLabError):
    """|x|^k rho at the grid edge too large for a trustworthy moment."""


class InsufficientSnapshots(MadelungLabError):
    """Fewer time slices than centered differencing requires."""


class EmptyEnsemble(MadelungLabError):
    """Ensemble with zero samples."""


class SeedMismatch(MadelungLabError):
    """Time slices of an ensemble series were drawn from different seeds."""


class UnknownParameter(MadelungLabError):
    """Sweep over a parameter the runner does not recognize."""


class MissingArtifact(MadelungLabError):
    """Plotting requested but the expected CSV artifacts are absent."""


class ConfigError(MadelungLabError):
    """Invalid scenario configuration; message lists every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(
            "invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations)
        )
