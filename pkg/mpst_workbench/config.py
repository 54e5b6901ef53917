import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv


load_dotenv()

DEFAULT_MAX_STATES = 10000
DEFAULT_UNFOLD_BOUND = 16
DEFAULT_TYPE_UNFOLD_BOUND = 8


@dataclass(frozen=True)
class Settings:
    max_states: int = DEFAULT_MAX_STATES
    unfold_bound: int = DEFAULT_UNFOLD_BOUND
    seed: int = 0
    log_level: str = "WARNING"
    project_root: Path = Path(__file__).resolve().parent.parent

    @property
    def workspace_dir(self) -> Path:
        return self.project_root / "workspaces"


def _positive_int(var: str, default: int) -> int:
    raw = os.getenv(var)
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise RuntimeError(f"{var} must be an integer, got {raw!r}")
    if value <= 0:
        raise RuntimeError(f"{var} must be positive, got {value}")
    return value


def get_settings() -> Settings:
    seed_raw = os.getenv("MPST_SEED", "0")
    try:
        seed = int(seed_raw)
    except ValueError:
        raise RuntimeError(f"MPST_SEED must be an integer, got {seed_raw!r}")

    return Settings(
        max_states=_positive_int("MPST_MAX_STATES", DEFAULT_MAX_STATES),
        unfold_bound=_positive_int("MPST_UNFOLD_BOUND", DEFAULT_UNFOLD_BOUND),
        seed=seed,
        log_level=os.getenv("MPST_LOG_LEVEL", "WARNING").upper(),
    )
