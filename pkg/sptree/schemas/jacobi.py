from pydantic import BaseModel, field_validator, model_validator
from typing import Optional, Tuple, Any, List
import numpy as np


class JacobiCoeffs(BaseModel):
    """
    One half-line block H = tridiag(-b; d; -b) of length N.

    weights holds the integer squared couplings a(n)^2 (n = 1..N) when the block
    comes from a tree, so the coefficient identities can be checked exactly.
    """
    k: int = 1
    offset: int = 0
    d: Any
    b: Any
    weights: Optional[Tuple[int, ...]] = None

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("d", "b", mode="before")
    def to_float_array(cls, v):
        arr = np.ascontiguousarray(v, dtype=np.float64).reshape(-1)
        arr.setflags(write=False)
        return arr

    @field_validator("k")
    def validate_k(cls, v):
        if v < 1:
            raise ValueError("k must be at least 1")
        return v

    @model_validator(mode="after")
    def check_lengths(self):
        if self.d.size < 1:
            raise ValueError("d must contain at least one entry")
        if self.b.size != self.d.size - 1:
            raise ValueError(f"b must have length N - 1 = {self.d.size - 1}, got {self.b.size}")
        if np.any(self.b < 0) or not np.all(np.isfinite(self.b)):
            raise ValueError("b must be finite and nonnegative")
        if not np.all(np.isfinite(self.d)):
            raise ValueError("d must be finite")
        if self.weights is not None and len(self.weights) != self.d.size:
            raise ValueError("weights must have length N")
        return self

    @property
    def N(self) -> int:
        return int(self.d.size)

    def todense(self) -> np.ndarray:
        H = np.diag(np.asarray(self.d, dtype=float))
        if self.N > 1:
            H -= np.diag(self.b, 1) + np.diag(self.b, -1)
        return H

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Hf for a vector of length N"""
        f = np.asarray(f)
        out = self.d * f
        out[:-1] -= self.b * f[1:]
        out[1:] -= self.b * f[:-1]
        return out

    def digest_bytes(self) -> bytes:
        return np.int64(self.k).tobytes() + np.ascontiguousarray(self.d).tobytes() + np.ascontiguousarray(self.b).tobytes()


class UnitaryBasis(BaseModel):
    U: Any
    block_index: List[Tuple[int, int]]

    class Config:
        arbitrary_types_allowed = True


class SpectralMeasure(BaseModel):
    atoms: Any
    weights: Any

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("atoms", "weights", mode="before")
    def to_float_array(cls, v):
        arr = np.ascontiguousarray(v, dtype=np.float64).reshape(-1)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def check_atoms(self):
        if self.atoms.size != self.weights.size:
            raise ValueError("atoms and weights must have the same length")
        if np.any(np.diff(self.atoms) <= 0):
            raise ValueError("atoms must be strictly increasing")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        return self

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def spread(self) -> float:
        if self.atoms.size == 0:
            return 0.0
        return float(self.atoms[-1] - self.atoms[0])

    def mass(self, a: float, b: float) -> float:
        """mu([a, b])"""
        lo = np.searchsorted(self.atoms, a, side="left")
        hi = np.searchsorted(self.atoms, b, side="right")
        return float(self.weights[lo:hi].sum())


class KernelBoundParams(BaseModel):
    eta: float
    m: float
    gamma: float
    alpha: float

    @classmethod
    def from_distance(cls, eta: float, z: complex, gamma: float) -> "KernelBoundParams":
        m = eta / (np.sqrt(eta + abs(z)) + 1.0)
        gm = gamma * m
        alpha = (gm + np.sqrt(gm * gm + 16.0)) / 4.0
        return cls(eta=float(eta), m=float(m), gamma=float(gamma), alpha=float(alpha))

    def bound(self, distance: int) -> float:
        """alpha^-|i-j| (1/eta) ((1+gamma)/(1-gamma))^2"""
        return float(self.alpha ** (-distance) / self.eta * ((1 + self.gamma) / (1 - self.gamma)) ** 2)


class TruncatedFree(BaseModel):
    base: JacobiCoeffs
    L_N: int
    size: int
    coeffs: JacobiCoeffs

    class Config:
        arbitrary_types_allowed = True
