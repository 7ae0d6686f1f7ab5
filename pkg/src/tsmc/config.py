"""Experiment configuration: INI files, validation and named presets."""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields

METHODS = ("tsmc", "tsmc_extended", "parallel_hmc", "parallel_mala", "mppi")
GRADIENT_METHODS = ("tsmc", "tsmc_extended", "parallel_hmc", "parallel_mala")

# Section each key lives in, and the methods allowed to set it (None: all).
_SCHEMA = {
    "name": ("experiment", None),
    "environment": ("experiment", None),
    "method": ("experiment", None),
    "seed": ("experiment", None),
    "output_dir": ("experiment", None),
    "temperature": ("sampler", None),
    "n_particles": ("sampler", None),
    "workers": ("sampler", None),
    "step_size": ("sampler", GRADIENT_METHODS),
    "max_leapfrog_steps": ("sampler", ("tsmc", "tsmc_extended", "parallel_hmc")),
    "moves_per_level": ("sampler", ("tsmc", "tsmc_extended")),
    "ess_ratio": ("sampler", ("tsmc", "tsmc_extended")),
    "max_steps": ("sampler", ("tsmc", "tsmc_extended")),
    "resampling": ("sampler", ("tsmc", "tsmc_extended")),
    "controller": ("task", None),
    "horizon": ("task", None),
    "batch_size": ("task", None),
    "policy_sigma": ("task", None),
    "n_steps": ("baseline", ("parallel_hmc", "parallel_mala")),
    "record_every": ("baseline", ("parallel_hmc", "parallel_mala")),
    "mppi_rollouts": ("baseline", ("mppi",)),
    "mppi_noise": ("baseline", ("mppi",)),
    "mppi_updates": ("baseline", ("mppi",)),
}
SECTIONS = ("experiment", "sampler", "task", "baseline")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    environment: str = "gaussian"
    method: str = "tsmc"
    seed: int = 0
    output_dir: str | None = None
    temperature: float = 1.0
    n_particles: int = 100
    workers: int = 1
    step_size: float = 0.1
    max_leapfrog_steps: int = 10
    moves_per_level: int = 1
    ess_ratio: float = 0.8
    max_steps: int = 500
    resampling: str = "systematic"
    controller: str | None = None
    horizon: int | None = None
    batch_size: int = 1
    policy_sigma: float = 0.5
    n_steps: int | None = None
    record_every: int | None = None
    mppi_rollouts: int = 64
    mppi_noise: float = 0.5
    mppi_updates: int = 64
    explicit: frozenset = field(default_factory=frozenset, compare=False, repr=False)

    def override(self, **changes) -> "ExperimentConfig":
        """Copy with ``changes`` applied and recorded as explicitly set."""
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, explicit=self.explicit | frozenset(changes), **changes)

    def with_method(self, method: str) -> "ExperimentConfig":
        """Switch method, dropping explicit keys the new method does not use."""
        keep = frozenset(k for k in self.explicit if _SCHEMA[k][1] is None or method in _SCHEMA[k][1])
        return dataclasses.replace(self, method=method, explicit=keep | {"method"})

    def validate(self) -> "ExperimentConfig":
        from .envs import ENVIRONMENTS

        if self.method not in METHODS:
            raise ConfigError("method", f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.environment not in ENVIRONMENTS:
            raise ConfigError("environment", f"unknown environment {self.environment!r}")
        for key in sorted(self.explicit):
            allowed = _SCHEMA[key][1]
            if allowed is not None and self.method not in allowed:
                raise ConfigError(key, f"not used by method {self.method!r} (only {', '.join(allowed)})")
        checks = [
            ("seed", 0 <= self.seed < 2**64, "must be a 64-bit unsigned integer"),
            ("temperature", self.temperature > 0, "must be positive"),
            ("n_particles", self.n_particles >= 2, "must be >= 2"),
            ("workers", self.workers >= 1, "must be >= 1"),
            ("step_size", self.step_size > 0, "must be positive"),
            ("max_leapfrog_steps", self.max_leapfrog_steps >= 1, "must be >= 1"),
            ("moves_per_level", self.moves_per_level >= 1, "must be >= 1"),
            ("ess_ratio", 0 < self.ess_ratio < 1, "must lie in (0, 1)"),
            ("max_steps", self.max_steps >= 1, "must be >= 1"),
            ("resampling", self.resampling in ("systematic", "multinomial"), "must be systematic or multinomial"),
            ("controller", self.controller in (None, "open_loop", "mlp"), "must be open_loop or mlp"),
            ("horizon", self.horizon is None or self.horizon >= 1, "must be >= 1"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("policy_sigma", self.policy_sigma > 0, "must be positive"),
            ("n_steps", self.n_steps is None or self.n_steps >= 0, "must be >= 0"),
            ("record_every", self.record_every is None or self.record_every >= 1, "must be >= 1"),
            ("mppi_rollouts", self.mppi_rollouts >= 1, "must be >= 1"),
            ("mppi_noise", self.mppi_noise > 0, "must be positive"),
            ("mppi_updates", self.mppi_updates >= 0, "must be >= 0"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)
        static = self.environment in ("gaussian", "shekel")
        if static and self.method == "tsmc_extended":
            raise ConfigError("method", f"{self.environment} has no initial states to extend over")
        for key in ("controller", "horizon", "batch_size", "policy_sigma"):
            if static and key in self.explicit:
                raise ConfigError(key, f"not used by the static environment {self.environment!r}")
        return self


def _convert(key, text):
    f = {f.name: f for f in fields(ExperimentConfig)}[key]
    kind = str(f.type)
    if text.strip() == "" and "None" in kind:
        return None
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {kind.split(' ')[0]}") from None
    return text.strip()


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse INI text, starting from ``base`` (or the defaults).

    ``preset = NAME`` in ``[experiment]`` starts from a named preset instead.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None
    base = base or ExperimentConfig()
    if parser.has_option("experiment", "preset"):
        name = parser.get("experiment", "preset").strip()
        if name not in PRESETS:
            raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        base = PRESETS[name]
        parser.remove_option("experiment", "preset")
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(section, f"unknown section; expected one of {', '.join(SECTIONS)}")
        for key, raw in parser.items(section):
            if key not in _SCHEMA:
                raise ConfigError(key, "unknown key")
            if _SCHEMA[key][0] != section:
                raise ConfigError(key, f"belongs in section [{_SCHEMA[key][0]}]")
            values[key] = _convert(key, raw)
    return dataclasses.replace(base, explicit=base.explicit | frozenset(values), **values)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(config: ExperimentConfig) -> str:
    """INI text containing every explicitly set key."""
    parser = configparser.ConfigParser(interpolation=None)
    for section in SECTIONS:
        keys = [k for k, (s, _) in _SCHEMA.items() if s == section and k in config.explicit]
        if keys:
            parser[section] = {k: "" if getattr(config, k) is None else repr_value(getattr(config, k))
                               for k in keys}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def repr_value(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _preset(**kw) -> ExperimentConfig:
    return ExperimentConfig().override(**kw)


PRESETS = {
    "gaussian": _preset(name="gaussian", environment="gaussian", temperature=1.0, n_particles=4096,
                        step_size=0.3, max_leapfrog_steps=8, ess_ratio=0.8),
    "shekel": _preset(name="shekel", environment="shekel", temperature=0.1, n_particles=100, ess_ratio=0.8,
                      step_size=0.2, max_leapfrog_steps=10),
    "pendulum-to": _preset(name="pendulum-to", environment="pendulum", temperature=0.1, step_size=0.2,
                           n_particles=100),
    "acrobot-to": _preset(name="acrobot-to", environment="acrobot", temperature=0.1, step_size=0.02,
                          n_particles=100),
    "pendulum-sparse-po": _preset(name="pendulum-sparse-po", environment="pendulum_sparse", temperature=0.0005,
                                  step_size=0.001, n_particles=32, batch_size=3000),
    "acrobot-po": _preset(name="acrobot-po", environment="acrobot", controller="mlp", temperature=100.0,
                          step_size=0.001, n_particles=16000),
    "cart-double-pendulum-po": _preset(name="cart-double-pendulum-po", environment="cart_double_pendulum",
                                       temperature=200.0, step_size=0.001, n_particles=14000),
}
