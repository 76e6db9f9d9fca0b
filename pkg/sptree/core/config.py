from pydantic_settings import BaseSettings
from pydantic import field_validator


class Settings(BaseSettings):
    APP_NAME: str = "Sparse Tree Spectral Lab"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False

    LOG_DIR: str = "logs"

    # Run ledger (one row per CLI command)
    DATABASE_URL: str = "sqlite:///sptree_runs.db"
    RUN_LEDGER_ENABLED: bool = True

    # Resolvent sweep cache
    SPTREE_CACHE_DIR: str = ".sptree_cache"

    # Dense limits
    DENSE_LIMIT_TREE: int = 2000
    DENSE_LIMIT_JACOBI: int = 4000

    # Numerical tolerances
    GS_RANK_TOL: float = 1e-10
    PIVOT_FALLBACK_RATIO: float = 1e-8

    # Energy quadrature for the Abel/resolvent identity
    QUADRATURE_PANEL_FRACTION: float = 0.25
    QUADRATURE_GL_NODES: int = 4
    QUADRATURE_TAIL_NODES: int = 8
    QUADRATURE_CHUNK: int = 256

    DEFAULT_WORKERS: int = 1

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"

    @field_validator("DENSE_LIMIT_TREE", "DENSE_LIMIT_JACOBI")
    def validate_dense_limit(cls, v, info):
        if v <= 0:
            raise ValueError(f"{info.field_name} must be greater than 0")
        return v

    @field_validator("GS_RANK_TOL", "PIVOT_FALLBACK_RATIO")
    def validate_tolerance(cls, v, info):
        if not 0 < v < 1:
            raise ValueError(f"{info.field_name} must lie in (0, 1)")
        return v

    @field_validator("QUADRATURE_PANEL_FRACTION")
    def validate_panel_fraction(cls, v):
        if v <= 0 or v > 0.25:
            raise ValueError("QUADRATURE_PANEL_FRACTION must lie in (0, 0.25]")
        return v

    @field_validator("QUADRATURE_GL_NODES", "QUADRATURE_TAIL_NODES", "QUADRATURE_CHUNK")
    def validate_node_counts(cls, v, info):
        if v <= 0:
            raise ValueError(f"{info.field_name} must be greater than 0")
        return v

    @field_validator("DEFAULT_WORKERS")
    def validate_workers(cls, v):
        if v < 1:
            raise ValueError("DEFAULT_WORKERS must be at least 1")
        return v


settings = Settings()
