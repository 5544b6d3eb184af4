from pydantic_settings import BaseSettings
from typing import Literal
from pathlib import Path

class Settings(BaseSettings):
    """Toolkit settings"""

    # Application
    APP_NAME: str = "CDN Toolkit"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False  # non-finite checks after every tensor op
    LOG_LEVEL: str = "INFO"

    # Runs
    OUTPUT_DIR: str = "runs"
    DEFAULT_SEED: int = 0

    # Generation
    DEFAULT_SAMPLES: int = 1000  # the @1k protocol
    DEFAULT_DIVERSITY: float = 1.0
    DEFAULT_DECODER: Literal["argmax", "sampling"] = "argmax"
    WORKERS: int = 1

    # Reports
    FLOAT_FORMAT: str = "%.6f"

    class Config:
        env_file = ".env"
        env_prefix = "CDN_"
        case_sensitive = True

    def output_path(self, *parts: str) -> Path:
        """Resolve a path under the output directory, creating parents"""
        path = Path(self.OUTPUT_DIR).joinpath(*parts)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

# Create settings instance
settings = Settings()
