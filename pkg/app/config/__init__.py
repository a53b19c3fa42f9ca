import os
from pathlib import Path

from dotenv import load_dotenv

# Get the base directory of the project
BASE_DIR = Path(__file__).resolve().parent.parent.parent

env_file = BASE_DIR / ".env"
load_dotenv(env_file)


def _env_int(var_name: str, default: int) -> int:
    value = os.getenv(var_name)
    if not value:
        return default
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"Invalid integer value for {var_name}: {value}") from None


class Config:
    # Logging
    LOG_LEVEL = os.getenv("DMPC_LOG_LEVEL", "INFO").upper()

    # Files
    OUTPUT_DIR = Path(os.getenv("DMPC_OUTPUT_DIR", str(BASE_DIR / "out")))
    PRESETS_DIR = Path(os.getenv("DMPC_PRESETS_DIR", str(BASE_DIR / "presets")))

    # Parallel agent solves when a scenario does not set sim.workers
    SIM_WORKERS = _env_int("DMPC_SIM_WORKERS", 1)

    @classmethod
    def get_settings(cls):
        """Get all settings as a dictionary."""
        return {
            key: value
            for key, value in cls.__dict__.items()
            if not key.startswith("_") and not callable(value) and not isinstance(value, classmethod)
        }


# Create a config instance
config = Config()
