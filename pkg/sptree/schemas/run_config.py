from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Literal, List, Optional, Tuple


class TreeConfig(BaseModel):
    gamma: float = 0.5
    rule: Literal["tower", "geometric", "explicit"] = "tower"
    sparse_positions: Optional[List[int]] = None
    geometric_first: int = 8
    geometric_ratio: int = 4
    depth: int = 20

    @field_validator("gamma")
    def validate_gamma(cls, v):
        if not 0 < v < 1:
            raise ValueError("gamma must lie strictly between 0 and 1")
        return v

    @field_validator("depth", "geometric_first")
    def validate_positive(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be at least 1")
        return v

    @field_validator("geometric_ratio")
    def validate_ratio(cls, v):
        if v < 2:
            raise ValueError("geometric_ratio must be at least 2")
        return v

    @model_validator(mode="after")
    def check_rule(self):
        if self.rule == "explicit" and not self.sparse_positions:
            raise ValueError("rule 'explicit' needs sparse_positions")
        return self


class StateConfig(BaseModel):
    kind: Literal["delta1", "first_kind", "second_kind"] = "delta1"
    nu: float = 0.5
    center: Optional[float] = None
    E0: float = 2.0
    c: float = 0.5
    site: int = 1

    @field_validator("nu")
    def validate_nu(cls, v):
        if not 0 < v < 1:
            raise ValueError("nu must lie strictly between 0 and 1")
        return v

    @field_validator("site")
    def validate_site(cls, v):
        if v < 1:
            raise ValueError("site must be at least 1")
        return v


class TimeGridConfig(BaseModel):
    t_min: float = 1.0
    t_max: float = 1000.0
    points: int = 13
    geometric: bool = True

    @model_validator(mode="after")
    def check_range(self):
        if self.t_min <= 0:
            raise ValueError("t_min must be greater than 0")
        if self.t_max <= self.t_min:
            raise ValueError("t_max must be greater than t_min")
        if self.points < 2:
            raise ValueError("points must be at least 2")
        return self


class ToleranceConfig(BaseModel):
    equivalence: float = 1e-10
    shift_ops: float = 1e-12
    recursion: float = 1e-6
    kernel_decay_growth: float = 2.0
    envelope_fraction: float = 0.95
    envelope_slack: float = 4.0
    dim_slack: float = 0.1
    c3_stability: float = 2.0


class VerifyConfig(BaseModel):
    betas: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    kernel_gammas: List[float] = Field(default_factory=lambda: [0.3, 0.6])
    kernel_shifts: int = 8
    kernel_max_distance: int = 40
    decay_order: int = 2
    decay_max_distance: int = 64
    recursion_n_max: int = 100
    c3_window: Tuple[float, float] = (1.0, 3.0)
    c3_epsilons: List[float] = Field(default_factory=lambda: [10.0 ** (-4 + 0.5 * i) for i in range(7)])


class RunConfig(BaseModel):
    operator: Literal["tree", "free", "diagonal"] = "tree"
    tree: TreeConfig = Field(default_factory=TreeConfig)
    k: int = 1
    length: Optional[int] = None
    state: StateConfig = Field(default_factory=StateConfig)
    nu: float = 0.5
    time_grid: TimeGridConfig = Field(default_factory=TimeGridConfig)
    p_list: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0])
    method: Literal["eigensum", "quadrature", "both"] = "eigensum"
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    barrier_index: Optional[int] = None
    output_dir: str = "results"
    seed: int = 0

    @field_validator("k")
    def validate_k(cls, v):
        if v < 1:
            raise ValueError("k must be at least 1")
        return v

    @field_validator("length")
    def validate_length(cls, v):
        if v is not None and v < 1:
            raise ValueError("length must be at least 1")
        return v

    @field_validator("nu")
    def validate_nu(cls, v):
        if not 0 < v < 1:
            raise ValueError("nu must lie strictly between 0 and 1")
        return v

    @field_validator("p_list")
    def validate_p_list(cls, v):
        if not v or any(p <= 0 for p in v):
            raise ValueError("p_list must hold positive moment orders")
        return v

    @field_validator("seed")
    def validate_seed(cls, v):
        if not 0 <= v < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        return v

    @model_validator(mode="after")
    def check_operator(self):
        if self.operator != "tree" and self.length is None:
            raise ValueError(f"operator '{self.operator}' needs an explicit length")
        return self
