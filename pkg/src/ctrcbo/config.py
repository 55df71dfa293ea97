"""Experiment configuration and the INI-style config file loader.

A config file has an ``[experiment]`` section plus optional ``[acquisition]``,
``[dual]``, ``[trust_region]``, ``[gp]`` and ``[environment]`` sections, and
one ``[cohort.<name>]`` section per cohort (kept in file order). Vector
values are comma separated.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .gp import KernelSpec
from .simulator import CohortSpec, Environment
from .trust_region import GlobalBounds

CONFIG_VERSION = 1
BENCHMARK_CONFIG = "benchmark_3cohort.ini"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    horizon: int = 200
    policy_dim: int = 3
    lower: tuple[float, ...] = (0.0, 0.0, 0.0)
    upper: tuple[float, ...] = (1.0, 1.0, 1.0)
    score_target: float = 1.0
    impression_budget: tuple[float, ...] = (1.5,)
    convergence_window: int = 2
    seeds: tuple[int, ...] = (0,)
    stop_on_convergence: bool = True
    # acquisition
    n_candidates: int = 256
    beta: float = 1.0
    eta: float = 1.0
    ref_margin: float = 0.1
    # dual
    epsilon: float = 0.05
    # trust region, lengths in normalized policy units
    length_init: float = 0.4
    length_min: float = 0.05
    length_max: float = 1.0
    tau_succ: int = 3
    tau_fail: int = 5
    initial_center: tuple[float, ...] | None = None
    tr_init: str = "causal"
    causal_seed_intensity: float = 0.5
    # gp; signal variances are multiples of the target variance
    rbf_lengthscales: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    sigmoid_slopes: tuple[float, ...] = (0.5, 1.0)
    sigmoid_biases: tuple[float, ...] = (0.0,)
    signal_variance_scales: tuple[float, ...] = (1.0,)
    noise_variances: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 5e-2)
    reselect_every: int = 10
    cold_start_steps: int | None = None

    def __post_init__(self):
        if self.horizon < 1 or not 1 <= self.convergence_window <= self.horizon:
            raise ConfigError("need horizon >= convergence_window >= 1")
        if len(self.impression_budget) < 1:
            raise ConfigError("need at least one constraint budget")
        if len(self.lower) != self.policy_dim or len(self.upper) != self.policy_dim:
            raise ConfigError("bounds must have policy_dim entries")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.n_candidates < 1 or self.reselect_every < 1:
            raise ConfigError("n_candidates and reselect_every must be >= 1")
        if self.initial_center is not None and len(self.initial_center) != self.policy_dim:
            raise ConfigError("initial_center must have policy_dim entries")
        if self.tr_init not in ("causal", "midpoint"):
            raise ConfigError(f"tr_init must be 'causal' or 'midpoint', got {self.tr_init!r}")
        self.bounds  # validates lower < upper

    @property
    def bounds(self) -> GlobalBounds:
        return GlobalBounds(np.array(self.lower), np.array(self.upper))

    @property
    def n_constraints(self) -> int:
        return len(self.impression_budget)

    @property
    def cold_start(self) -> int:
        if self.cold_start_steps is not None:
            return self.cold_start_steps
        return max(2, self.policy_dim)

    def kernel_grid(self, target_var: float) -> list[KernelSpec]:
        scale = max(float(target_var), 1e-6)
        grid = []
        for s in self.signal_variance_scales:
            grid += [KernelSpec.rbf(ls, s * scale) for ls in self.rbf_lengthscales]
            grid += [
                KernelSpec.sigmoid(a, b, s * scale)
                for a in self.sigmoid_slopes
                for b in self.sigmoid_biases
            ]
        return grid

    def fingerprint(self) -> str:
        """Hash of every setting except the seed list."""
        d = asdict(self)
        d.pop("seeds")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_SECTIONS = ("experiment", "acquisition", "dual", "trust_region", "gp")
_ENV_KEYS = {"context_period", "context_ar_coef", "context_shock_scale"}
_COHORT_KEYS = {
    "weight", "saturation", "rate", "impression_gain", "score_direction",
    "impression_direction", "context_sensitivity", "score_noise_sd", "impression_noise_sd",
}
_TUPLE_FIELDS = {
    f.name for f in fields(ExperimentConfig) if "tuple" in str(f.type)
}
_INT_FIELDS = {
    "horizon", "policy_dim", "convergence_window", "n_candidates", "tau_succ",
    "tau_fail", "reselect_every", "cold_start_steps",
}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _parse_seeds(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _read_parser(source) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if isinstance(source, configparser.ConfigParser):
        return source
    path = _resolve(source)
    with open(path) as fh:
        parser.read_file(fh)
    return parser


def _resolve(source) -> Path:
    path = Path(source)
    if path.exists():
        return path
    bundled = resources.files("ctrcbo") / "data" / str(source)
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"config file not found: {source}")


def _check_version(parser: configparser.ConfigParser) -> None:
    version = parser.getint("meta", "version", fallback=CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")


def load_experiment(source) -> ExperimentConfig:
    parser = _read_parser(source)
    _check_version(parser)
    if not parser.has_section("experiment"):
        raise ConfigError("config has no [experiment] section")
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {}
    for section in _SECTIONS:
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown setting [{section}] {key}")
            try:
                if key == "seeds":
                    kwargs[key] = _parse_seeds(raw)
                elif key == "tr_init":
                    kwargs[key] = raw.strip()
                elif key == "stop_on_convergence":
                    kwargs[key] = parser.getboolean(section, key)
                elif key in _TUPLE_FIELDS:
                    kwargs[key] = _floats(raw)
                elif key in _INT_FIELDS:
                    kwargs[key] = int(raw)
                else:
                    kwargs[key] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _reject_unknown(section: str, items, known: set) -> None:
    for key in items:
        if key not in known:
            raise ConfigError(f"unknown setting [{section}] {key}")


def load_environment(source) -> Environment:
    parser = _read_parser(source)
    _check_version(parser)
    exp = load_experiment(parser)
    env = parser["environment"] if parser.has_section("environment") else {}
    _reject_unknown("environment", env, _ENV_KEYS)
    cohorts = []
    for section in parser.sections():
        if not section.startswith("cohort."):
            continue
        s = parser[section]
        _reject_unknown(section, s, _COHORT_KEYS)
        try:
            cohorts.append(
                CohortSpec(
                    id=section.split(".", 1)[1],
                    weight=s.getfloat("weight"),
                    saturation=s.getfloat("saturation"),
                    rate=s.getfloat("rate"),
                    impression_gain=s.getfloat("impression_gain"),
                    score_direction=np.array(_floats(s["score_direction"])),
                    impression_direction=np.array(_floats(s["impression_direction"])),
                    context_sensitivity=np.array(_floats(s.get("context_sensitivity", "0,0"))),
                    score_noise_sd=s.getfloat("score_noise_sd", 0.0),
                    impression_noise_sd=s.getfloat("impression_noise_sd", 0.0),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad cohort section [{section}]: {exc}") from exc
    if exp.n_constraints != 1:
        raise ConfigError("the simulator models a single impression constraint")
    try:
        environment = Environment(
            cohorts=tuple(cohorts),
            impression_budget=exp.impression_budget[0],
            score_target=exp.score_target,
            context_period=float(env.get("context_period", 7.0)),
            context_ar_coef=float(env.get("context_ar_coef", 0.8)),
            context_shock_scale=float(env.get("context_shock_scale", 0.1)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if environment.policy_dim != exp.policy_dim:
        raise ConfigError("cohort direction vectors do not match policy_dim")
    return environment


def load_config(source) -> tuple[ExperimentConfig, Environment]:
    parser = _read_parser(source)
    return load_experiment(parser), load_environment(parser)
