from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings

LogFormat = Literal['text', 'json', 'TEXT', 'JSON']


class Settings(BaseSettings):
    model_config = {
        'extra': 'ignore',
        'env_file': '.env',
        'env_file_encoding': 'utf-8',
    }

    SERVICE_NAME: str = 'qapvdss'
    SERVICE_VERSION: str = '0.1.0'
    LOG_LEVEL: str = 'INFO'
    LOG_FORMAT: LogFormat = 'text'

    QAPVDSS_WORKERS: int = Field(default=1, ge=1)

    DEBUG_CHECKS: bool = False
    DEBUG_CHECK_EVERY: int = Field(default=64, ge=1)

    RTS_TABU_MIN_FACTOR: float = Field(default=0.9, gt=0)
    RTS_TABU_MAX_FACTOR: float = Field(default=1.1, gt=0)

    VDSS_DEPTHS: list[int] = Field(default_factory=lambda: [2, 5])
    VDSS_MOVE_LIMIT: int = Field(default=100_000, ge=1)
    VDSS_BUDGET_SCOPE: Literal['depth_pass', 'schedule_pass'] = 'depth_pass'
    VDSS_ALLOW_REUSE: bool = False

    TTT_MAX_ATTEMPTS: int = Field(default=1000, ge=1)


settings = Settings()
