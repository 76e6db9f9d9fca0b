from pydantic import BaseModel, Field, PrivateAttr, field_validator, model_validator
from typing import Literal, List, Union, Any, Dict, Tuple
import numpy as np


class BumpProfile(BaseModel):
    """scale * e * exp(-1/(1-u^2)) with u = (x - center)/radius, so the peak is scale"""
    kind: Literal["bump"] = "bump"
    center: float
    radius: float
    scale: float = 1.0

    @field_validator("radius")
    def validate_radius(cls, v):
        if v <= 0:
            raise ValueError("radius must be greater than 0")
        return v

    @property
    def support(self) -> Tuple[float, float]:
        return (self.center - self.radius, self.center + self.radius)


class PlateauProfile(BaseModel):
    """scale * S((x-a)/width) * S((b-x)/width); 0 outside [a, b], scale on [a+width, b-width]"""
    kind: Literal["plateau"] = "plateau"
    a: float
    b: float
    width: float
    scale: float = 1.0

    @model_validator(mode="after")
    def check_window(self):
        if self.width <= 0:
            raise ValueError("width must be greater than 0")
        if self.b - self.a < 2 * self.width:
            raise ValueError("plateau window must be at least twice the transition width")
        return self

    @property
    def support(self) -> Tuple[float, float]:
        return (self.a, self.b)


Profile = Union[BumpProfile, PlateauProfile]


class SmoothTestFunction(BaseModel):
    """
    Compactly supported smooth function with a Chebyshev representation on its support.

    Library functions keep their closed-form profiles; derivatives are then taken from
    exact Taylor coefficients. Functions built from arbitrary callables differentiate
    the Chebyshev series.
    """
    support: Tuple[float, float]
    cheb: Any
    kind: Literal["first", "second", "generic"] = "generic"
    profiles: List[Profile] = Field(default_factory=list)
    bound: float = 0.0
    x0: float = 0.0
    window: Dict[str, float] = Field(default_factory=dict)

    _derivatives: Dict[int, Any] = PrivateAttr(default_factory=dict)

    class Config:
        arbitrary_types_allowed = True

    @model_validator(mode="after")
    def check_support(self):
        if not self.support[0] < self.support[1]:
            raise ValueError("support must be a nondegenerate interval")
        return self

    @property
    def degree(self) -> int:
        return len(self.cheb.coef) - 1

    @property
    def is_zero(self) -> bool:
        return not self.profiles and not np.any(self.cheb.coef)


class HsConfig(BaseModel):
    order: int = 3
    tolerance: float = 1e-5
    s_min: float = 5e-3
    max_depth: int = 6
    gl_nodes: int = 8
    cutoff_panels: int = 16

    @field_validator("order")
    def validate_order(cls, v):
        if v < 1:
            raise ValueError("order must be at least 1")
        return v

    @field_validator("tolerance", "s_min")
    def validate_positive(cls, v, info):
        if not 0 < v < 1:
            raise ValueError(f"{info.field_name} must lie in (0, 1)")
        return v

    @field_validator("max_depth", "gl_nodes", "cutoff_panels")
    def validate_counts(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be at least 1")
        return v
