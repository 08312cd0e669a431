"""
Run configuration.

Precedence: built-in defaults < JSON config file (--config) < command-line flags.
The resolved configuration is archived next to every command's outputs.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from typing import Optional

from src.prevalence_bayes import GibbsConfig
from src.textmodel import DEFAULT_C_GRID

logger = logging.getLogger(__name__)

RUN_CONFIG_FILE = "run_config.json"


class ConfigError(ValueError):
    """Invalid or unknown configuration entries."""


@dataclass
class PathsConfig:
    input: Optional[str] = None
    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None
    model: Optional[str] = None
    calibration: Optional[str] = None
    profiles: Optional[str] = None
    output_dir: str = 'output'
    # community name -> JSONL path; when empty the study groups the test corpus by community
    communities: dict = field(default_factory=dict)


@dataclass
class GibbsSettings:
    iterations: int = 70_000
    burn_in: int = 20_000
    lag: int = 50
    chains: int = 3
    alpha: list = field(default_factory=lambda: [1.0, 1.0])


def _default_sim_communities() -> list:
    return [
        {'name': 'synthetic-low-cost', 'posting_cost': 'Low', 'exposure_benefit': 'High',
         'n_accounts': 2000, 'first_time_pi': 0.15, 'repeat_pi': 0.02},
        {'name': 'synthetic-high-cost', 'posting_cost': 'High', 'exposure_benefit': 'Low',
         'n_accounts': 2000, 'first_time_pi': 0.03, 'repeat_pi': 0.005},
    ]


@dataclass
class SimulationConfig:
    pi_star: float = 0.08
    eta_star: float = 0.90
    theta_star: float = 0.89
    n_test: int = 5000
    n_train_truthful: int = 400
    n_train_deceptive: int = 400
    n_dev: int = 400
    vocab_overlap: float = 0.7
    communities: list = field(default_factory=_default_sim_communities)


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    c_grid: list = field(default_factory=lambda: list(DEFAULT_C_GRID))
    C: Optional[float] = None
    folds: int = 5
    gibbs: GibbsSettings = field(default_factory=GibbsSettings)
    granularity: str = 'quarterly'
    cumulative: bool = True
    thresholds: list = field(default_factory=lambda: [1, 2, 3])
    min_bucket_size: int = 30
    min_chars: int = 150
    rating: Optional[int] = None
    sample_size: Optional[int] = None
    seed: int = 0
    n_jobs: int = 1
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def gibbs_config(self) -> GibbsConfig:
        return GibbsConfig(
            iterations=self.gibbs.iterations,
            burn_in=self.gibbs.burn_in,
            lag=self.gibbs.lag,
            seed=self.seed,
            chains=self.gibbs.chains,
            alpha=tuple(self.gibbs.alpha),
            n_jobs=self.n_jobs,
        )

    def output_path(self, *parts: str) -> str:
        return os.path.join(self.paths.output_dir, *parts)

    def to_dict(self) -> dict:
        return asdict(self)


# annotation -> accepted JSON types, for fields whose default is None
_OPTIONAL_TYPES = {'Optional[str]': (str,), 'Optional[int]': (int,), 'Optional[float]': (int, float)}

COMMUNITY_KEYS = {'name', 'posting_cost', 'exposure_benefit', 'n_accounts', 'first_time_pi', 'repeat_pi',
                  'vocab_overlap'}


def _accepted_types(annotation: str, default) -> tuple:
    if default is None:
        return _OPTIONAL_TYPES.get(annotation, (object,))
    if isinstance(default, bool):
        return (bool,)
    if isinstance(default, float):
        return (int, float)
    return (type(default),)


def _check_type(value, annotation: str, default, where: str) -> None:
    if value is None and default is None:
        return
    accepted = _accepted_types(annotation, default)
    # bool is an int subclass; only bool fields take true/false
    if isinstance(value, bool) and bool not in accepted:
        raise ConfigError(f"{where}: expected {accepted[-1].__name__}, got a boolean")
    if not isinstance(value, accepted):
        raise ConfigError(f"{where}: expected {accepted[-1].__name__}, got {type(value).__name__}")


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown config key(s): {', '.join(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}")
        else:
            _check_type(value, str(known[name].type), current, f"{where}.{name}")
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, 'config')


def load_config(path: Optional[str] = None) -> RunConfig:
    """Defaults, overlaid with a JSON config file when one is given."""
    if path is None:
        return RunConfig()
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, 'r', encoding='utf-8') as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    logger.info(f"Loaded config from {path}")
    return config_from_dict(data)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _validate_communities(entries: list) -> None:
    """Simulated community entries: a name plus optional numeric knobs and a profile."""
    names = set()
    for i, entry in enumerate(entries):
        where = f"simulation.communities[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected an object")
        unknown = sorted(set(entry) - COMMUNITY_KEYS)
        if unknown:
            raise ConfigError(f"{where}: unknown config key(s): {', '.join(unknown)}")
        name = entry.get('name')
        if not isinstance(name, str) or not name:
            raise ConfigError(f"{where}: 'name' must be a non-empty string")
        if name in names:
            raise ConfigError(f"{where}: duplicate community name {name!r}")
        names.add(name)
        for key in ('n_accounts', 'first_time_pi', 'repeat_pi', 'vocab_overlap'):
            if key in entry and not _is_number(entry[key]):
                raise ConfigError(f"{where}.{key}: expected a number, got {entry[key]!r}")
        if isinstance(entry.get('n_accounts'), float):
            raise ConfigError(f"{where}.n_accounts: expected an integer")
        if ('posting_cost' in entry) != ('exposure_benefit' in entry):
            raise ConfigError(f"{where}: posting_cost and exposure_benefit go together")


def validate(config: RunConfig) -> RunConfig:
    """Range and shape checks the dataclass types alone cannot express."""
    if config.granularity not in ('monthly', 'quarterly', 'yearly'):
        raise ConfigError(f"granularity must be monthly, quarterly or yearly, got {config.granularity!r}")
    if not config.c_grid or not all(_is_number(c) and c > 0 for c in config.c_grid):
        raise ConfigError("c_grid must be a non-empty list of positive numbers")
    if config.C is not None and config.C <= 0:
        raise ConfigError("C must be positive")
    if not config.thresholds or not all(isinstance(k, int) and not isinstance(k, bool) and k >= 1
                                        for k in config.thresholds):
        raise ConfigError("thresholds must be integers >= 1")
    if config.min_chars < 0:
        raise ConfigError("min_chars must be >= 0")
    if not all(_is_number(a) for a in config.gibbs.alpha):
        raise ConfigError("gibbs.alpha must be a pair of positive numbers")
    if not all(isinstance(v, str) for v in config.paths.communities.values()):
        raise ConfigError("paths.communities must map community names to file paths")
    _validate_communities(config.simulation.communities)
    config.gibbs_config()
    return config


def archive_config(config: RunConfig) -> str:
    """Writes the resolved config beside the command's outputs."""
    os.makedirs(config.paths.output_dir, exist_ok=True)
    path = config.output_path(RUN_CONFIG_FILE)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(config.to_dict(), handle, indent=2, sort_keys=True)
    return path
