from functools import lru_cache

from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from prosoref.common.constants import LOG_CONFIG_PATH
from prosoref.common.enum import LogLevel
from prosoref.core.exceptions import UsageError


class Settings(BaseSettings):
    log: LogLevel = LogLevel.INFO
    dev: bool = False
    workers: int = Field(default=4, ge=1)
    log_config: str = str(LOG_CONFIG_PATH)

    model_config = SettingsConfigDict(env_prefix="PROSOREF_", extra="ignore")

    @field_validator("log", mode="before")
    @classmethod
    def lower_level(cls, value):
        if isinstance(value, str):
            return value.strip().lower()
        return value


@lru_cache(maxsize=None)
def get_settings() -> Settings:
    try:
        return Settings()
    except ValidationError as e:
        raise UsageError(f"invalid environment: {e.errors()[0]['msg']}") from e
