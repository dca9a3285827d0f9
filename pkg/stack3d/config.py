"""
Application configuration module.

This module handles process-level settings for the 3D backend flow,
including logging setup, environment-driven defaults and the base
error type shared by every service.
"""
import logging
import os


class Stack3dError(Exception):
    """Base class for flow errors; carries the CLI exit code."""
    exit_code = 1


class ConfigurationError(Stack3dError):
    """Raised when there's an error in configuration."""
    exit_code = 1


class LoggingConfig:
    """Manages logging configuration."""

    @staticmethod
    def setup_logger(name: str = "stack3d") -> logging.Logger:
        """
        Set up a logger with appropriate formatting and level.

        Args:
            name: Name of the logger

        Returns:
            Configured logger instance
        """
        logger = logging.getLogger(name)

        # Get log level from environment variable, default to INFO
        log_level_name = os.environ.get("LOG_LEVEL", "INFO").upper()
        log_level = getattr(logging, log_level_name, logging.INFO)
        logger.setLevel(log_level)

        # Avoid adding multiple handlers if reloaded
        if not logger.handlers:
            handler = logging.StreamHandler()
            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - [%(module)s:%(lineno)d] - %(message)s'
            )
            handler.setFormatter(formatter)
            logger.addHandler(handler)

        return logger


class AppConfig:
    """Application configuration container."""

    def __init__(self):
        """Initialize configuration from environment variables."""
        # Parallelism cap for intra-stage work
        self.threads = self._read_int("OPEN3D_THREADS", os.cpu_count() or 1)

        # Database units used for every emitted LEF/DEF
        self.dbu_per_micron = self._read_int("STACK3D_DBU", 1000)

        # Generated 3D PDKs are cached here between flow runs
        self.cache_dir = os.environ.get("STACK3D_CACHE_DIR", ".stack3d-cache")

        # Area-proportional power model, W/mm^2
        self.power_density = float(os.environ.get("STACK3D_POWER_DENSITY", "0.05"))

        self._validate_config()

    @staticmethod
    def _read_int(name: str, default: int) -> int:
        raw = os.environ.get(name)
        if raw is None or raw == "":
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigurationError(f"{name} must be an integer, got '{raw}'")

    def _validate_config(self) -> None:
        """Validate configuration values."""
        if self.threads < 1:
            logger.warning(f"OPEN3D_THREADS={self.threads} is not positive. Falling back to 1.")
            self.threads = 1

        if self.dbu_per_micron <= 0:
            raise ConfigurationError("STACK3D_DBU must be positive.")

        if self.power_density < 0:
            raise ConfigurationError("STACK3D_POWER_DENSITY must not be negative.")


# Initialize configuration
logger = LoggingConfig.setup_logger("stack3d")
config = AppConfig()

# Export commonly used configuration values
THREADS = config.threads
DBU_PER_MICRON = config.dbu_per_micron
CACHE_DIR = config.cache_dir
POWER_DENSITY_W_PER_MM2 = config.power_density
