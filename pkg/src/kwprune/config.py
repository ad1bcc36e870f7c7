"""Sectioned key-value settings with command-line overrides.

Files use configparser syntax (`[simulation]` / `n_min = 5`). Every key
has a default, a file may override it, and a flag overrides both. Unknown
sections or keys are rejected so typos fail loudly, with the file and key
named in the error.
"""

from __future__ import annotations

import configparser
from decimal import Decimal, InvalidOperation
from os import PathLike
from typing import Callable, Mapping

from .data import DEFAULT_DAILY_BUDGET, SyntheticConfig, money
from .errors import InvalidConfig
from .simulator import BudgetModel, SimulationConfig

_TRUTHY = {"true": True, "yes": True, "on": True, "1": True}
_FALSY = {"false": False, "no": False, "off": False, "0": False}


def parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in _TRUTHY:
        return True
    if lowered in _FALSY:
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_int(raw: str) -> int:
    return int(raw.strip())


def _parse_optional_int(raw: str) -> int | None:
    lowered = raw.strip().lower()
    if lowered in ("", "none"):
        return None
    return int(lowered)


def _parse_float(raw: str) -> float:
    return float(raw.strip())


def _parse_money(raw: str) -> Decimal:
    return money(raw.strip())


def _parse_str(raw: str) -> str:
    return raw.strip()


def _parse_optional_str(raw: str) -> str | None:
    stripped = raw.strip()
    return stripped or None


def parse_names(raw: str) -> tuple[str, ...]:
    names = tuple(part.strip() for part in raw.split(",") if part.strip())
    if not names:
        raise ValueError("expected a comma-separated list of names")
    return names


def parse_ints(raw: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in raw.split(",") if part.strip())


SCHEMA: dict[str, dict[str, Callable[[str], object]]] = {
    "simulation": {
        "n_min": _parse_int,
        "window": _parse_int,
        "start_day": _parse_int,
        "end_day": _parse_int,
        "policy": _parse_str,
        "seed": _parse_int,
        "k_shot": _parse_int,
        "prune_to": _parse_optional_int,
        "compound": parse_bool,
        "same_campaign_only": parse_bool,
        "max_chars": _parse_optional_int,
        "max_repairs": _parse_int,
    },
    "budget": {
        "response": _parse_str,
        "alpha": _parse_float,
        "daily": _parse_money,
    },
    "policy": {
        "compare": parse_names,
        "sweep": parse_ints,
    },
    "llm": {
        "endpoint": _parse_optional_str,
        "model": _parse_str,
        "timeout_secs": _parse_float,
        "max_retries": _parse_int,
        "script": _parse_optional_str,
        "repeat": parse_bool,
    },
    "paths": {
        "input": _parse_optional_str,
        "out": _parse_str,
    },
    "synthetic": {
        "campaigns": _parse_int,
        "keywords": _parse_int,
        "days": _parse_int,
        "skew_fraction": _parse_float,
        "skew_share": _parse_float,
        "noise": _parse_float,
        "budget": _parse_money,
        "seed": _parse_int,
    },
}

DEFAULTS: dict[str, dict[str, object]] = {
    "simulation": {
        "n_min": 5,
        "window": 7,
        "start_day": 7,
        "end_day": 20,
        "policy": "kp_agent",
        "seed": 0,
        "k_shot": 3,
        "prune_to": None,
        "compound": True,
        "same_campaign_only": False,
        "max_chars": None,
        "max_repairs": 3,
    },
    "budget": {
        "response": "linear",
        "alpha": 1.0,
        "daily": DEFAULT_DAILY_BUDGET,
    },
    "policy": {
        "compare": (
            "oracle",
            "impression_rank",
            "ctr_rank",
            "cvr_rank",
            "impression_regression",
        ),
        "sweep": (),
    },
    "llm": {
        "endpoint": None,
        "model": "default",
        "timeout_secs": 30.0,
        "max_retries": 3,
        "script": None,
        "repeat": True,
    },
    "paths": {
        "input": None,
        "out": "out",
    },
    "synthetic": {
        "campaigns": 45,
        "keywords": 10,
        "days": 21,
        "skew_fraction": 0.2,
        "skew_share": 0.8,
        "noise": 0.3,
        "budget": DEFAULT_DAILY_BUDGET,
        "seed": 0,
    },
}


def read_config_file(path: str | PathLike) -> dict[str, dict[str, object]]:
    """Parse one settings file, validating sections, keys, and value types."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as err:
        raise InvalidConfig(f"cannot read config file {path}: {err}") from err
    except configparser.Error as err:
        raise InvalidConfig(f"{path}: {err}") from err

    out: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise InvalidConfig(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            parse = SCHEMA[section].get(key)
            if parse is None:
                raise InvalidConfig(f"{path}: unknown key {key!r} in [{section}]")
            try:
                out.setdefault(section, {})[key] = parse(raw)
            except (ValueError, InvalidOperation) as err:
                raise InvalidConfig(f"{path}: [{section}] {key}: {err}") from err
    return out


def merged_settings(
    path: str | PathLike | None = None,
    overrides: Mapping[tuple[str, str], object] | None = None,
) -> dict[str, dict[str, object]]:
    """Layer defaults, then the file, then flag overrides (flags win)."""
    merged = {section: dict(values) for section, values in DEFAULTS.items()}
    if path is not None:
        for section, values in read_config_file(path).items():
            merged[section].update(values)
    for (section, key), value in (overrides or {}).items():
        if value is None:
            continue
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise InvalidConfig(f"unknown setting [{section}] {key}")
        merged[section][key] = value
    return merged


def simulation_config(merged: Mapping[str, Mapping[str, object]]) -> SimulationConfig:
    sim = merged["simulation"]
    budget = merged["budget"]
    model = BudgetModel(response=budget["response"], alpha=float(budget["alpha"]))
    return SimulationConfig(
        n_min=sim["n_min"],
        window=sim["window"],
        start_day=sim["start_day"],
        end_day=sim["end_day"],
        policy=sim["policy"],
        budget_model=model,
        seed=sim["seed"],
        k_shot=sim["k_shot"],
        prune_to=sim["prune_to"],
        compound=sim["compound"],
        same_campaign_only=sim["same_campaign_only"],
        max_chars=sim["max_chars"],
        max_repairs=sim["max_repairs"],
    )


def synthetic_config(merged: Mapping[str, Mapping[str, object]]) -> SyntheticConfig:
    syn = merged["synthetic"]
    return SyntheticConfig(
        campaigns=syn["campaigns"],
        keywords_per_campaign=syn["keywords"],
        days=syn["days"],
        skew_fraction=syn["skew_fraction"],
        skew_share=syn["skew_share"],
        noise=syn["noise"],
        seed=syn["seed"],
        daily_budget=syn["budget"],
    )


def validate_sweep(values: tuple[int, ...]) -> tuple[int, ...]:
    """Sweep values must be positive and strictly increasing."""
    for value in values:
        if value < 1:
            raise InvalidConfig(f"sweep values must be positive, got {value}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidConfig(f"sweep values must be strictly increasing, got {list(values)}")
    return values
