import logging
import os

from dotenv import load_dotenv

SUPPORTED_PRECISIONS = ("float32", "float64")


def get_settings() -> dict:
    """
    Reads the runtime settings from the environment (and a .env file, if present).
    Algorithm tunables live in the SwapConfig/OptimConfig/TrainConfig dataclasses instead.
    """
    load_dotenv()

    precision = os.getenv("STYLESWAP_PRECISION", "float32").lower()
    if precision not in SUPPORTED_PRECISIONS:
        raise ValueError(
            f"Unsupported STYLESWAP_PRECISION: {precision}. Please use 'float32' or 'float64'."
        )

    workers = _int_setting("STYLESWAP_WORKERS", 1)
    checkpoint_every = _int_setting("STYLESWAP_CHECKPOINT_EVERY", 50)

    log_level = os.getenv("STYLESWAP_LOG_LEVEL", "INFO").upper()
    if not isinstance(logging.getLevelName(log_level), int):
        raise ValueError(f"Unsupported STYLESWAP_LOG_LEVEL: {log_level}.")

    return {
        "precision": precision,
        "workers": workers,
        "checkpoint_every": checkpoint_every,
        "log_level": log_level,
    }


def _int_setting(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}.")
    if value < 1:
        raise ValueError(f"{name} must be at least 1, got {value}.")
    return value


def worker_count() -> int:
    return get_settings()["workers"]
