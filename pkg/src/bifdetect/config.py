"""Run configuration: ``key = value`` files plus ``--key value`` overrides.

Keys and defaults (list values are comma separated)::

    system        pitchfork           # or linear:a11,a12,a21,a22
    alpha0        -4                  # reference parameter
    alpha_lo      -5
    alpha_hi      -1
    alpha_step    0.2
    box           -1,1,-1,1           # lo,hi per coordinate
    M             100
    P             5,10,15,20,25       # horizons; data is simulated at the largest
    tau           0.1
    d             5
    beta          1e-4
    mu            1e-3                # fixed mu for beta and P sweeps
    mu_min        1e-6
    mu_max        1
    mu_points     13
    beta_min      1e-8
    beta_max      1e-1
    beta_points   15
    K             5
    seed          0
    target        model-aware         # or koopman
    out           out
    integrator_step                   # empty: tau / 100
    lambda_lo     -5
    lambda_hi     -0.1
    lambda_steps  491
    grid_points   41                  # eigenfunction grid per axis
    kappa         10
    frozen_mu                         # empty: re-select mu per detection cell
    res_C         1e-6
    res_nu        1
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .dynamics import KOOPMAN, MODEL_AWARE
from .errors import ConfigurationError, DatasetParseError
from .sampling import read_key_values


@dataclass(frozen=True)
class RunConfig:
    system: str = "pitchfork"
    alpha0: float = -4.0
    alpha_lo: float = -5.0
    alpha_hi: float = -1.0
    alpha_step: float = 0.2
    box: tuple = ((-1.0, 1.0), (-1.0, 1.0))
    M: int = 100
    P: tuple = (5, 10, 15, 20, 25)
    tau: float = 0.1
    d: int = 5
    beta: float = 1e-4
    mu: float = 1e-3
    mu_min: float = 1e-6
    mu_max: float = 1.0
    mu_points: int = 13
    beta_min: float = 1e-8
    beta_max: float = 1e-1
    beta_points: int = 15
    K: int = 5
    seed: int = 0
    target: str = MODEL_AWARE
    out: str = "out"
    integrator_step: Optional[float] = None
    lambda_lo: float = -5.0
    lambda_hi: float = -0.1
    lambda_steps: int = 491
    grid_points: int = 41
    kappa: float = 10.0
    frozen_mu: Optional[float] = None
    res_C: float = 1e-6
    res_nu: float = 1.0

    @property
    def alphas(self) -> np.ndarray:
        count = int(round((self.alpha_hi - self.alpha_lo) / self.alpha_step)) + 1
        # rounding keeps grid points like -2.0 free of representation noise
        return np.round(self.alpha_lo + self.alpha_step * np.arange(count), 12)

    @property
    def mu_grid(self) -> tuple:
        return tuple(np.logspace(np.log10(self.mu_min), np.log10(self.mu_max), self.mu_points))

    @property
    def beta_grid(self) -> tuple:
        return tuple(np.logspace(np.log10(self.beta_min), np.log10(self.beta_max),
                                 self.beta_points))

    @property
    def P_max(self) -> int:
        return max(self.P)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_INTS = {"M", "d", "mu_points", "beta_points", "K", "seed", "lambda_steps", "grid_points"}
_OPTIONAL = {"integrator_step", "frozen_mu"}
_STRINGS = {"system", "target", "out"}


def _convert(key, text):
    text = text.strip()
    try:
        if key in _STRINGS:
            return text
        if key in _OPTIONAL:
            return float(text) if text else None
        if key == "box":
            v = [float(t) for t in text.split(",")]
            if len(v) % 2 or not v:
                raise ValueError("box needs lo,hi pairs")
            return tuple(zip(v[::2], v[1::2]))
        if key == "P":
            return tuple(int(t) for t in text.split(","))
        if key in _INTS:
            return int(text)
        return float(text)
    except ValueError as exc:
        raise ConfigurationError(f"{key}: cannot parse {text!r} ({exc})") from None


def _validate(cfg: RunConfig) -> RunConfig:
    def need(ok, key, what):
        if not ok:
            raise ConfigurationError(f"{key}: {what} (got {getattr(cfg, key)!r})")

    need(cfg.tau > 0, "tau", "must be positive")
    need(cfg.d >= 1, "d", "must be at least 1")
    need(cfg.M >= 1, "M", "must be at least 1")
    need(len(cfg.P) > 0 and min(cfg.P) >= 1, "P", "horizons must be positive")
    need(cfg.alpha_step > 0, "alpha_step", "must be positive")
    need(cfg.alpha_hi >= cfg.alpha_lo, "alpha_hi", "must not be below alpha_lo")
    need(all(lo < hi for lo, hi in cfg.box), "box", "every interval needs lo < hi")
    need(cfg.beta >= 0, "beta", "must be nonnegative")
    need(cfg.mu > 0, "mu", "must be positive")
    need(0 < cfg.mu_min <= cfg.mu_max and cfg.mu_points >= 1, "mu_min", "needs 0 < mu_min <= mu_max")
    need(0 < cfg.beta_min <= cfg.beta_max and cfg.beta_points >= 1, "beta_min",
         "needs 0 < beta_min <= beta_max")
    need(cfg.K >= 2, "K", "must be at least 2")
    need(cfg.seed >= 0, "seed", "must be nonnegative")
    need(cfg.target in (MODEL_AWARE, KOOPMAN), "target", f"must be {MODEL_AWARE} or {KOOPMAN}")
    need(cfg.lambda_lo < cfg.lambda_hi, "lambda_lo", "must be below lambda_hi")
    need(cfg.lambda_steps >= 3, "lambda_steps", "must be at least 3")
    need(cfg.grid_points >= 2, "grid_points", "must be at least 2")
    need(cfg.kappa > 0, "kappa", "must be positive")
    need(cfg.integrator_step is None or cfg.integrator_step > 0, "integrator_step",
         "must be positive")
    need(cfg.frozen_mu is None or cfg.frozen_mu > 0, "frozen_mu", "must be positive")
    need(cfg.res_C > 0 and cfg.res_nu > 0, "res_C", "resonance constants must be positive")
    return cfg


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (string values)."""
    raw = {}
    if path is not None:
        try:
            raw.update(read_key_values(path))
        except DatasetParseError as exc:
            raise ConfigurationError(f"config {path}: {exc}") from None
        except OSError as exc:
            raise ConfigurationError(f"config {path}: {exc.strerror}") from None
    raw.update(overrides or {})
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    return _validate(RunConfig(**{k: _convert(k, v) for k, v in raw.items()}))


def derive_seed(seed: int, tag: str) -> int:
    """Independent stream per command stage: ``(seed + crc32(tag)) mod 2**32``."""
    return (int(seed) + zlib.crc32(tag.encode())) % 2 ** 32
