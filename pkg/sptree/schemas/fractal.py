from pydantic import BaseModel
from typing import List, Tuple, Optional


class LocalDimension(BaseModel):
    x: float
    gamma_hat: float
    delta_window: Tuple[float, float]
    slopes: List[float]
    resolved: bool


class DimensionProfile(BaseModel):
    points: List[float]
    gamma_hat: List[float]
    delta_grid: List[float]
    dim_lower: float
    dim_upper: float
    resolved: bool


class HolderResult(BaseModel):
    alpha: float
    constant: Optional[float]
    divergent: bool
    lengths: List[float]
    level_sups: List[float]
    trend: float


class FourierAbelReport(BaseModel):
    alpha: float
    values: List[Tuple[float, float]]
    sup: float
    growth: float
    bounded: bool
