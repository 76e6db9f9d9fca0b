from pydantic import BaseModel, Field
from typing import List, Tuple, Optional, Dict, Any


class EquivalenceReport(BaseModel):
    off_block: float
    in_block: float
    eigenvalue_distance: float
    dimension: int

    @property
    def max_deviation(self) -> float:
        return max(self.off_block, self.in_block, self.eigenvalue_distance)


class CoefficientReport(BaseModel):
    k: int
    violations: List[int] = Field(default_factory=list)
    max_diagonal_deviation: float = 0.0
    max_coupling_deviation: float = 0.0
    positive_couplings: bool = True

    @property
    def passed(self) -> bool:
        return not self.violations and self.max_coupling_deviation <= 1e-12 and self.positive_couplings


class ShiftOpsReport(BaseModel):
    beta: float
    laplacian_factorization: float
    adjoint: float
    conjugated_delta: float
    conjugated_delta_star: float
    support: Tuple[int, int]

    @property
    def max_deviation(self) -> float:
        return max(self.laplacian_factorization, self.adjoint, self.conjugated_delta, self.conjugated_delta_star)


class KernelBoundEntry(BaseModel):
    i: int
    j: int
    lhs: float
    rhs: float
    violation: bool


class KernelBoundReport(BaseModel):
    z: Tuple[float, float]
    gamma: float
    eta: float
    alpha: float
    entries: List[KernelBoundEntry]

    @property
    def violations(self) -> int:
        return sum(1 for e in self.entries if e.violation)


class RecursionReport(BaseModel):
    z: Tuple[float, float]
    n_max: int
    deviations: List[float]
    max_deviation: float


class InverseNormEntry(BaseModel):
    n: int
    barriers: int
    log2_norm: float
    log2_structural: float
    c4_fit: float


class InverseNormReport(BaseModel):
    z: Tuple[float, float]
    K: float
    entries: List[InverseNormEntry]
    c4_max: float
    bounded: bool


class KernelDecayReport(BaseModel):
    k: int
    triple_norm: float
    windows: List[Tuple[int, float]]
    c2_fit: float
    stable: bool
    hs_deviation: Optional[float] = None


class CheckResult(BaseModel):
    name: str
    passed: bool
    details: Dict[str, Any] = Field(default_factory=dict)


class VerifyReport(BaseModel):
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)
