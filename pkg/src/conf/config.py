import logging
from typing import List

from pydantic import BaseSettings


class Settings(BaseSettings):
    output_dir: str = "runs"
    log_level: str = "INFO"
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"
    checkpoint_path: str = "runs/model.ckpt"
    max_workers: int = 1
    cors_origins: List[str] = ["http://localhost:3000"]

    class Config:
        env_prefix = "CLD_"
        env_file = ".env"
        env_file_encoding = "utf-8"


settings = Settings()


def configure_logging(level: str | None = None) -> None:
    """
    Installs the root handler used by the CLI and the web app.

    :param level: str | None: Log level name, defaults to settings.log_level
    :return: None
    """
    logging.basicConfig(level=(level or settings.log_level).upper(), format=settings.log_format)
