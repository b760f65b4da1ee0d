from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class LabSettings(BaseSettings):
    """
    Process-wide knobs, read from INLS_* environment variables and `.env`.

    Experiment semantics never live here; those belong to the JSON configs.
    """

    model_config = SettingsConfigDict(env_prefix="INLS_", env_file=".env", extra="ignore")

    log_level: str = Field("INFO", description="DEBUG, INFO, WARNING or ERROR")
    json_logs: bool = False
    jobs: int = Field(1, ge=1, description="Upper bound on parallel sweep rows")
    ground_tol: float = Field(1e-10, gt=0.0)
    ground_residual_tol: float = Field(1e-8, gt=0.0)
    ground_max_iter: int = Field(5000, ge=1)


@lru_cache(maxsize=1)
def get_settings() -> LabSettings:
    return LabSettings()
