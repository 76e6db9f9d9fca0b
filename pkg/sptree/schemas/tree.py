from pydantic import BaseModel, field_validator, model_validator
from typing import Optional, Tuple, Any


def tower_positions(limit: int) -> Tuple[int, ...]:
    """
    Sparse shells L_m = 2^(m^m), m >= 1, stopping before the first one beyond limit
    """
    positions = []
    m = 1
    while (value := 2 ** (m ** m)) <= limit:
        positions.append(value)
        m += 1
    return tuple(positions)


class TreeParams(BaseModel):
    gamma: float
    depth: int
    sparse_positions: Optional[Tuple[int, ...]] = None

    @model_validator(mode="before")
    @classmethod
    def fill_default_positions(cls, data):
        if isinstance(data, dict) and data.get("sparse_positions") is None:
            try:
                depth = int(data["depth"])
            except (KeyError, TypeError, ValueError):
                return data
            data = {**data, "sparse_positions": tower_positions(depth)}
        return data

    @field_validator("gamma")
    def validate_gamma(cls, v):
        if not 0 < v < 1:
            raise ValueError("gamma must lie strictly between 0 and 1")
        return v

    @field_validator("depth")
    def validate_depth(cls, v):
        if v < 1:
            raise ValueError("depth must be at least 1")
        return v

    @field_validator("sparse_positions")
    def validate_positions(cls, v):
        if v and v[0] < 1:
            raise ValueError("sparse_positions must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("sparse_positions must be strictly increasing")
        return v

    def positions_within(self, limit: int) -> Tuple[int, ...]:
        return tuple(p for p in self.sparse_positions if p <= limit)


class ShTree(BaseModel):
    params: TreeParams
    g: Tuple[int, ...]
    alpha: Tuple[int, ...]
    vertex_count: int

    class Config:
        frozen = True

    @model_validator(mode="after")
    def check_shells(self):
        if len(self.alpha) != len(self.g) + 1:
            raise ValueError("alpha must have exactly one more entry than g")
        if self.alpha[0] != 1:
            raise ValueError("alpha[0] must be 1")
        if any(x < 1 for x in self.g):
            raise ValueError("branching numbers must be at least 1")
        for n, gn in enumerate(self.g):
            if self.alpha[n + 1] != self.alpha[n] * gn:
                raise ValueError(f"alpha[{n + 1}] != alpha[{n}] * g[{n}]")
        if self.vertex_count != sum(self.alpha):
            raise ValueError("vertex_count must equal the sum of the shell sizes")
        return self

    @property
    def depth(self) -> int:
        return len(self.g)

    @property
    def shell_offsets(self) -> Tuple[int, ...]:
        """Index of the first vertex of every shell, with vertex_count appended"""
        offsets = [0]
        for size in self.alpha:
            offsets.append(offsets[-1] + size)
        return tuple(offsets)

    def degree(self, n: int) -> int:
        if n == 0:
            return self.g[0]
        if n == self.depth:
            return 1
        return self.g[n] + 1


class SparseLaplacian(BaseModel):
    """H = D - A on l2(vertices) in shell-major order; both parts kept"""
    dimension: int
    matrix: Any
    adjacency: Any
    degree: Any

    class Config:
        arbitrary_types_allowed = True

    def toarray(self):
        return self.matrix.toarray()
