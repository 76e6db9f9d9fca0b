from pydantic import BaseModel, Field, model_validator
from typing import Literal, List, Tuple, Optional, Any, Dict
import numpy as np


class TimeAverageProfile(BaseModel):
    T: float
    a: Any
    method: Literal["eigensum", "quadrature"]
    norm: float
    mass_error: float = 0.0
    tail_flag: bool = False

    class Config:
        arbitrary_types_allowed = True

    @property
    def N(self) -> int:
        return int(np.asarray(self.a).size)


class MomentCurve(BaseModel):
    p: float
    samples: List[Tuple[float, float]]
    warnings: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_samples(self):
        ts = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("T must be strictly increasing")
        if any(m <= 0 for _, m in self.samples):
            raise ValueError("moments must be positive")
        return self

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([m for _, m in self.samples], dtype=float)


class BetaEstimate(BaseModel):
    p: float
    beta_hat: float
    raw_min_slope: float
    max_slope: float
    window: Tuple[float, float]
    local_slopes: List[Tuple[float, float]]
    target: Optional[float] = None


class EnergyIntegrals(BaseModel):
    epsilon: float
    window: Tuple[float, float]
    I: float
    J: float
    A: float
    M_T: float


class C3Fit(BaseModel):
    window: Tuple[float, float]
    epsilons: List[float]
    ratios: List[float]
    c3: Optional[float] = None
    stability: Optional[float] = None


class EscapeBoundFit(BaseModel):
    c5: float
    q_N: float
    per_point: List[Dict[str, float]]


class EnvelopeReport(BaseModel):
    p: float
    N: int
    L_N: int
    crossover_exponent: float
    pivot_T: float
    pivot_offset_octaves: float
    target: float
    q_N: float
    c_p: float
    lower_constant: Optional[float] = None
    upper_constant: Optional[float] = None
    lower_window: Tuple[float, float]
    upper_window: Tuple[float, float]
    points: List[Dict[str, Any]]
    fraction_inside: float
    passed: bool
