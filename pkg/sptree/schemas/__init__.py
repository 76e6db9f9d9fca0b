from .tree import TreeParams, ShTree, SparseLaplacian, tower_positions
from .jacobi import JacobiCoeffs, UnitaryBasis, SpectralMeasure, KernelBoundParams, TruncatedFree
from .hsfc import SmoothTestFunction, HsConfig, BumpProfile, PlateauProfile
from .dynamics import (
    TimeAverageProfile,
    MomentCurve,
    BetaEstimate,
    EnergyIntegrals,
    EscapeBoundFit,
    EnvelopeReport
)
from .fractal import LocalDimension, DimensionProfile, HolderResult, FourierAbelReport
from .reports import (
    EquivalenceReport,
    CoefficientReport,
    ShiftOpsReport,
    KernelBoundEntry,
    KernelBoundReport,
    RecursionReport,
    InverseNormEntry,
    InverseNormReport,
    KernelDecayReport,
    CheckResult,
    VerifyReport
)
from .run_config import RunConfig, TreeConfig, StateConfig, TimeGridConfig, ToleranceConfig, VerifyConfig
from .run_log import RunLogCreate, RunLogResponse, RunLogUpdate

__all__ = [
    "TreeParams",
    "ShTree",
    "SparseLaplacian",
    "tower_positions",
    "JacobiCoeffs",
    "UnitaryBasis",
    "SpectralMeasure",
    "KernelBoundParams",
    "TruncatedFree",
    "SmoothTestFunction",
    "HsConfig",
    "BumpProfile",
    "PlateauProfile",
    "TimeAverageProfile",
    "MomentCurve",
    "BetaEstimate",
    "EnergyIntegrals",
    "EscapeBoundFit",
    "EnvelopeReport",
    "LocalDimension",
    "DimensionProfile",
    "HolderResult",
    "FourierAbelReport",
    "EquivalenceReport",
    "CoefficientReport",
    "ShiftOpsReport",
    "KernelBoundEntry",
    "KernelBoundReport",
    "RecursionReport",
    "InverseNormEntry",
    "InverseNormReport",
    "KernelDecayReport",
    "CheckResult",
    "VerifyReport",
    "RunConfig",
    "TreeConfig",
    "StateConfig",
    "TimeGridConfig",
    "ToleranceConfig",
    "VerifyConfig",
    "RunLogCreate",
    "RunLogResponse",
    "RunLogUpdate"
]
