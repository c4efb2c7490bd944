import json
from json import JSONDecodeError
from pathlib import Path
from typing import Any, Dict, Optional

from mrfrec.models import ConfigError, TrainConfig

CONFIG_JSON_PATH = Path(__file__).with_name("config.json")
DEFAULT_CONFIG: Dict[str, Any] = {
    "lambda": 500.0,
    "alpha": 0.75,
    "center": True,
    "solver": "dense",
    "target_density": 0.005,
    "cap": 1000,
    "r": 0.5,
    "seed": 98765,
    "threads": 1,
    "omega": 3.0,
    "val_frac": 0.1,
    "test_frac": 0.1,
    "fold_in_frac": 0.8,
    "ks": [20, 50, 100],
    "delimiter": ",",
    "header": False,
    "binarize": True,
    "min_user_count": 0,
    "min_item_count": 0,
}

# Grids documented for manual hyperparameter search; nothing iterates them automatically.
ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
LAMBDA_GRID = (50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0)

_TRAIN_KEYS = {
    "lambda": "lam",
    "alpha": "alpha",
    "center": "center",
    "solver": "solver",
    "target_density": "target_density",
    "cap": "cap",
    "r": "r",
    "seed": "seed",
    "threads": "threads",
    "omega": "omega",
}


def _read_json_object(path: Path) -> Dict[str, Any]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except JSONDecodeError as exc:
        raise ConfigError(f"{path} could not be parsed; fix or delete it and retry.") from exc
    except OSError as exc:
        raise ConfigError(f"{path} could not be read: {exc}") from exc

    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a JSON object.")
    return data


def load_config(path: Optional[Path] = None) -> Dict[str, Any]:
    """Load config.json (or ``path``), creating the default file when missing.

    Unknown keys are rejected; missing keys fall back to DEFAULT_CONFIG.
    """
    if path is None:
        path = CONFIG_JSON_PATH
        if not path.exists():
            try:
                path.write_text(json.dumps(DEFAULT_CONFIG, indent=2, ensure_ascii=False), encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"Cannot create default configuration {path}: {exc}") from exc
            return dict(DEFAULT_CONFIG)

    data = _read_json_object(Path(path))
    unknown = sorted(set(data) - set(DEFAULT_CONFIG))
    if unknown:
        raise ConfigError(f"Unknown configuration keys in {path}: {', '.join(unknown)}")

    for key, value in DEFAULT_CONFIG.items():
        data.setdefault(key, value)
    return data


def merge_overrides(data: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Apply command-line values that were actually given (None means 'not given')."""
    merged = dict(data)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return merged


def build_train_config(data: Dict[str, Any]) -> TrainConfig:
    try:
        kwargs = {attr: data[key] for key, attr in _TRAIN_KEYS.items()}
        config = TrainConfig(
            lam=float(kwargs["lam"]),
            alpha=float(kwargs["alpha"]),
            center=bool(kwargs["center"]),
            solver=str(kwargs["solver"]),
            target_density=float(kwargs["target_density"]),
            cap=int(kwargs["cap"]),
            r=float(kwargs["r"]),
            seed=int(kwargs["seed"]),
            threads=int(kwargs["threads"]),
            omega=float(kwargs["omega"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid training configuration: {exc}") from exc
    return config.validate()


def validate_split_params(data: Dict[str, Any]) -> None:
    val_frac = float(data["val_frac"])
    test_frac = float(data["test_frac"])
    fold_in_frac = float(data["fold_in_frac"])
    if not (val_frac > 0 and test_frac > 0 and val_frac + test_frac < 1):
        raise ConfigError(
            f"val_frac and test_frac must be positive with a sum below 1, got {val_frac} and {test_frac}"
        )
    if not 0 < fold_in_frac < 1:
        raise ConfigError(f"fold_in_frac must lie in (0, 1), got {fold_in_frac}")
    ks = data["ks"]
    if not ks or any(int(k) < 1 for k in ks):
        raise ConfigError(f"ks must be a nonempty list of positive cutoffs, got {ks}")
