"""Configuration-driven command line front end."""

from .config import ConfigError, RunConfig, load_config
from .main import main

__all__ = ["ConfigError", "RunConfig", "load_config", "main"]
