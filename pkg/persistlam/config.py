"""
Configuration settings for the persistlam engine.
Loads environment variables and provides centralized defaults.

Environment values override the built-in defaults; command-line flags
override both (see cli.py).
"""

import os
from pathlib import Path
from typing import List, Tuple

from dotenv import load_dotenv

# Load environment variables from .env file
env_path = Path(__file__).parent.parent / ".env"
load_dotenv(dotenv_path=env_path)


class Settings:
    """
    Engine settings loaded from environment variables.
    Provides default values for solver tolerances, threading and logging.
    """

    # ===========================================
    # PARALLELISM & REPRODUCIBILITY
    # ===========================================
    THREADS: int = int(os.getenv("THREADS", "1"))
    SEED: int = int(os.getenv("SEED", "0"))
    SEED_FROM_ENV: bool = os.getenv("SEED") is not None

    # ===========================================
    # LOGGING
    # ===========================================
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()
    LOG_FORMAT: str = os.getenv("LOG_FORMAT", "json").lower()
    DEBUG_MODE: bool = os.getenv("DEBUG_MODE", "false").lower() == "true"

    # ===========================================
    # OUTPUT
    # ===========================================
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "out")

    # ===========================================
    # SOLVER DEFAULTS
    # ===========================================
    NEWTON_TOL: float = float(os.getenv("NEWTON_TOL", "1e-12"))
    NEWTON_MAX: int = int(os.getenv("NEWTON_MAX", "30"))
    FIXPOINT_TOL: float = float(os.getenv("FIXPOINT_TOL", "1e-11"))
    FIXPOINT_MAX: int = int(os.getenv("FIXPOINT_MAX", "200"))
    PLANE_EPS: float = float(os.getenv("PLANE_EPS", "0.5"))
    PLANE_TOL: float = float(os.getenv("PLANE_TOL", "1e-10"))

    # ===========================================
    # GEOMETRY THRESHOLDS
    # ===========================================
    MAX_CONDITION: float = 1e6
    MAX_TRANSPORT_CONDITION: float = 1e8
    STALL_WINDOW: int = 5

    @classmethod
    def log_level(cls) -> str:
        """Effective log level (DEBUG_MODE wins)."""
        return "DEBUG" if cls.DEBUG_MODE else cls.LOG_LEVEL

    @classmethod
    def validate(cls) -> Tuple[bool, List[str]]:
        """Validate configuration consistency."""
        problems = []

        if cls.THREADS < 1:
            problems.append(f"THREADS must be >= 1, got {cls.THREADS}")
        if not 0 < cls.NEWTON_TOL < cls.FIXPOINT_TOL * 10:
            problems.append("NEWTON_TOL should be positive and below 10*FIXPOINT_TOL")
        if cls.LOG_FORMAT not in ("json", "text"):
            problems.append(f"LOG_FORMAT must be 'json' or 'text', got {cls.LOG_FORMAT!r}")

        return (not problems, problems)


# Global settings instance
settings = Settings()
