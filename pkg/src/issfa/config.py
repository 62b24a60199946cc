"""Experiment configuration: INI-style files with strict key validation.

Three sections — [simulation], [hyperparams], [schedule] — each key optional
with the defaults below; unknown sections or keys are errors naming the
offender. Grids are written like "32x32" or "8x8x8"; vector-valued keys
(xi_mean, xi_precision) take whitespace-separated floats.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .model import Hyperparams
from .simulate import SimConfig


class ConfigError(ValueError):
    pass


@dataclass
class Schedule:
    sweeps: int = 2000
    thin: int = 20
    burnin_frac: float = 0.5
    inner_sweeps: int = 5
    init: str = "kmeans"             # "kmeans" or "prior"
    kmeans_clusters: int = 15
    init_detect_sd: float = 2.0
    refresh_every: int = 50
    checkpoint_every: int = 0        # 0: final checkpoint only
    svd_rank: int = 0                # 0: use the true K from the data directory
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 1 or self.thin < 1:
            raise ConfigError("sweeps and thin must be >= 1")
        if not 0 <= self.burnin_frac < 1:
            raise ConfigError("burnin_frac must be in [0, 1)")
        if self.init not in ("kmeans", "prior"):
            raise ConfigError(f"init must be 'kmeans' or 'prior', got {self.init!r}")
        if self.inner_sweeps < 1:
            raise ConfigError("inner_sweeps must be >= 1")


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    schedule: Schedule = field(default_factory=Schedule)


def _parse_grid(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in text.lower().replace("×", "x").split("x"))
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}; expected e.g. 32x32") from None
    if not 1 <= len(dims) <= 3:
        raise ConfigError(f"grid must have 1 to 3 axes, got {text!r}")
    return dims


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split())


_SIM_KEYS = {
    "grid": ("grid_dims", _parse_grid),
    "observations": ("t_rows", int),
    "holdout": ("holdout_rows", int),
    "k_true": ("k_true", int),
    "activation_prob": ("activation_prob", float),
    "theta1": ("theta1", float),
    "theta2": ("theta2", float),
    "weight_mean": ("weight_mean", float),
    "weight_var_min": ("weight_var_min", float),
    "weight_var_max": ("weight_var_max", float),
    "noise_variance": ("noise_variance", float),
    "seed": ("seed", int),
}

_HYPER_KEYS = {
    "noise_shape": ("a", float),
    "noise_scale": ("b", float),
    "alpha_shape": ("e_alpha", float),
    "alpha_rate": ("f_alpha", float),
    "beta_shape": ("e_beta", float),
    "beta_rate": ("f_beta", float),
    "beta_proposal_sd": ("s_beta", float),
    "nu_shape": ("e_nu", float),
    "nu_rate": ("f_nu", float),
    "tau_mean": ("m_tau", float),
    "tau_precision": ("r_tau", float),
    "xi_mean": ("m_xi", _parse_floats),
    "xi_precision": ("r_xi", _parse_floats),
    "max_new_features": ("max_new_features", int),
    "theta_mh": ("theta_mh", None),  # parsed as a boolean below
}

_SCHEDULE_KEYS = {
    "sweeps": ("sweeps", int),
    "thin": ("thin", int),
    "burnin_frac": ("burnin_frac", float),
    "inner_sweeps": ("inner_sweeps", int),
    "init": ("init", str),
    "kmeans_clusters": ("kmeans_clusters", int),
    "init_detect_sd": ("init_detect_sd", float),
    "refresh_every": ("refresh_every", int),
    "checkpoint_every": ("checkpoint_every", int),
    "svd_rank": ("svd_rank", int),
    "seed": ("seed", int),
}

_SECTIONS = {
    "simulation": _SIM_KEYS,
    "hyperparams": _HYPER_KEYS,
    "schedule": _SCHEDULE_KEYS,
}


def _collect(parser: configparser.ConfigParser, section: str) -> dict:
    spec = _SECTIONS[section]
    out: dict = {}
    if not parser.has_section(section):
        return out
    for key, raw in parser.items(section):
        if key not in spec:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        field_name, conv = spec[key]
        try:
            if key == "theta_mh":
                out[field_name] = parser.getboolean(section, key)
            else:
                out[field_name] = conv(raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad value for {key!r} in [{section}]: {exc}") from None
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}] in {path}")

    sim_kwargs = _collect(parser, "simulation")
    theta1 = sim_kwargs.pop("theta1", None)
    theta2 = sim_kwargs.pop("theta2", None)
    var_lo = sim_kwargs.pop("weight_var_min", None)
    var_hi = sim_kwargs.pop("weight_var_max", None)
    defaults = SimConfig()
    sim_kwargs["theta_true"] = (
        defaults.theta_true[0] if theta1 is None else theta1,
        defaults.theta_true[1] if theta2 is None else theta2,
    )
    sim_kwargs["weight_var_range"] = (
        defaults.weight_var_range[0] if var_lo is None else var_lo,
        defaults.weight_var_range[1] if var_hi is None else var_hi,
    )
    try:
        sim = SimConfig(**sim_kwargs)
        hyper = Hyperparams(**_collect(parser, "hyperparams"))
        schedule = Schedule(**_collect(parser, "schedule"))
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(sim=sim, hyper=hyper, schedule=schedule)


def config_echo(cfg: ExperimentConfig) -> dict:
    """JSON-serialisable echo of every effective setting."""
    return {
        "simulation": {
            "grid": "x".join(str(d) for d in cfg.sim.grid_dims),
            "observations": cfg.sim.t_rows,
            "holdout": cfg.sim.holdout_rows,
            "k_true": cfg.sim.k_true,
            "activation_prob": cfg.sim.activation_prob,
            "theta1": cfg.sim.theta_true[0],
            "theta2": cfg.sim.theta_true[1],
            "weight_mean": cfg.sim.weight_mean,
            "weight_var_min": cfg.sim.weight_var_range[0],
            "weight_var_max": cfg.sim.weight_var_range[1],
            "noise_variance": cfg.sim.noise_variance,
            "seed": cfg.sim.seed,
        },
        "hyperparams": {
            "noise_shape": cfg.hyper.a,
            "noise_scale": cfg.hyper.b,
            "alpha_shape": cfg.hyper.e_alpha,
            "alpha_rate": cfg.hyper.f_alpha,
            "beta_shape": cfg.hyper.e_beta,
            "beta_rate": cfg.hyper.f_beta,
            "beta_proposal_sd": cfg.hyper.s_beta,
            "nu_shape": cfg.hyper.e_nu,
            "nu_rate": cfg.hyper.f_nu,
            "tau_mean": cfg.hyper.m_tau,
            "tau_precision": cfg.hyper.r_tau,
            "xi_mean": list(cfg.hyper.m_xi),
            "xi_precision": list(cfg.hyper.r_xi),
            "max_new_features": cfg.hyper.max_new_features,
            "theta_mh": cfg.hyper.theta_mh,
        },
        "schedule": {
            "sweeps": cfg.schedule.sweeps,
            "thin": cfg.schedule.thin,
            "burnin_frac": cfg.schedule.burnin_frac,
            "inner_sweeps": cfg.schedule.inner_sweeps,
            "init": cfg.schedule.init,
            "kmeans_clusters": cfg.schedule.kmeans_clusters,
            "init_detect_sd": cfg.schedule.init_detect_sd,
            "refresh_every": cfg.schedule.refresh_every,
            "checkpoint_every": cfg.schedule.checkpoint_every,
            "svd_rank": cfg.schedule.svd_rank,
            "seed": cfg.schedule.seed,
        },
    }
