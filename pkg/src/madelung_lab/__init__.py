"""Numerical laboratory for 1D quantum hydrodynamics.

The package propagates free-particle wavefunctions, extracts the hydrodynamic
(Madelung) fields, and certifies the identities tying them together: force
decomposition, moment relations, energy and pressure partitions, uncertainty
bounds, and the Monte-Carlo ensemble machinery of local/global means.
"""

from .errors import (
    ConfigError,
    DegenerateDensity,
    DiffusionAtZero,
    EmptyEnsemble,
    GridTooNarrow,
    InsufficientSnapshots,
    MadelungLabError,
    MethodBoundaryMismatch,
    MissingArtifact,
    NormDrift,
    SchemeBoundaryMismatch,
    SeedMismatch,
    TailTruncation,
    UnknownParameter,
)
from .fields import (
    BOUNDARIES,
    PERIODIC,
    SCHEMES,
    VANISHING,
    ComplexField,
    Field,
    RealField,
    SpatialGrid,
    derivative,
    integrate,
    write_field_csv,
)
from .schrodinger import (
    PhysicalConstants,
    WaveState,
    initial_gaussian,
    propagate,
    write_snapshots,
)
from .madelung import (
    MadelungFields,
    bohm_potential,
    continuity_residual,
    enthalpy_residual,
    extract,
    force_decomposition_residual,
    local_mean_force,
    material_acceleration,
    pressures,
    write_fields_csv,
)
from .gaussian import (
    REGIMES,
    GaussianParams,
    fields_closed_form,
    flow_velocity,
    mean_energy,
    osmotic_velocity,
    sigma,
)
from .gaussian import material_acceleration as gaussian_acceleration
from .statistics import (
    MomentReport,
    MomentRow,
    UncertaintyReport,
    UncertaintyRow,
    energy_partition,
    force_moments,
    uncertainty_check,
)
from .ensemble import (
    ConsistencyReport,
    LocalMeanEstimate,
    TrajectoryEnsemble,
    consistency_check,
    global_mean,
    local_mean,
    sample_ensemble,
    write_ensemble_csv,
    write_estimate_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BOUNDARIES",
    "ComplexField",
    "ConfigError",
    "ConsistencyReport",
    "DegenerateDensity",
    "DiffusionAtZero",
    "EmptyEnsemble",
    "Field",
    "GaussianParams",
    "GridTooNarrow",
    "InsufficientSnapshots",
    "LocalMeanEstimate",
    "MadelungFields",
    "MadelungLabError",
    "MethodBoundaryMismatch",
    "MissingArtifact",
    "MomentReport",
    "MomentRow",
    "NormDrift",
    "PERIODIC",
    "PhysicalConstants",
    "REGIMES",
    "RealField",
    "SCHEMES",
    "SchemeBoundaryMismatch",
    "SeedMismatch",
    "SpatialGrid",
    "TailTruncation",
    "TrajectoryEnsemble",
    "UncertaintyReport",
    "UncertaintyRow",
    "UnknownParameter",
    "VANISHING",
    "WaveState",
    "bohm_potential",
    "consistency_check",
    "continuity_residual",
    "derivative",
    "energy_partition",
    "enthalpy_residual",
    "extract",
    "fields_closed_form",
    "flow_velocity",
    "force_decomposition_residual",
    "force_moments",
    "gaussian_acceleration",
    "global_mean",
    "initial_gaussian",
    "integrate",
    "local_mean",
    "local_mean_force",
    "material_acceleration",
    "mean_energy",
    "osmotic_velocity",
    "pressures",
    "propagate",
    "sample_ensemble",
    "sigma",
    "uncertainty_check",
    "write_ensemble_csv",
    "write_estimate_csv",
    "write_field_csv",
    "write_fields_csv",
    "write_snapshots",
]
