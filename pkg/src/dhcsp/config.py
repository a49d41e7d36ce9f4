"""Run configuration: a flat key=value file plus command-line overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Optional

from .bisim import DEFAULT_BUDGET
from .codegen import UNITS
from .stepsize import DEFAULT_SIGMA


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    source: Optional[str] = None
    eps: float = 0.2
    eps_dde: Optional[float] = None
    time_bound: float = 10.0
    sigma: float = DEFAULT_SIGMA
    dt_ref: Optional[float] = None
    seed: int = 0
    out: str = "out"
    time_unit: str = "SC_MS"
    state_budget: int = DEFAULT_BUDGET
    h: Optional[float] = None

    def __post_init__(self):
        self.check()

    def check(self):
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if not self.time_bound > 0:
            raise ConfigError("time_bound must be positive")
        if self.eps_dde is not None and not 0 < self.eps_dde < self.eps:
            raise ConfigError("eps_dde must lie in (0, eps)")
        if self.h is not None and not self.h > 0:
            raise ConfigError("h must be positive")
        if self.dt_ref is not None and not self.dt_ref > 0:
            raise ConfigError("dt_ref must be positive")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if self.state_budget < 1:
            raise ConfigError("state_budget must be at least 1")
        if self.time_unit not in UNITS:
            raise ConfigError("time_unit must be one of %s" % ", ".join(UNITS))

    @property
    def eps_bar(self) -> float:
        """Precision handed to the step-size search; half of eps unless set."""
        return self.eps_dde if self.eps_dde is not None else self.eps / 2.0


_CASTS = {f.name: f.type for f in fields(RunConfig)}


def _cast(key, raw):
    kind = _CASTS[key]
    if raw.lower() in ("none", ""):
        if "Optional" in str(kind):
            return None
        raise ConfigError("%s needs a value" % key)
    try:
        if "int" in str(kind):
            return int(raw)
        if "float" in str(kind):
            return float(raw)
    except ValueError:
        raise ConfigError("%s: cannot read %r" % (key, raw)) from None
    return raw


def read_config(path: str) -> dict:
    """Values from a key=value file; a relative ``source`` is taken relative to the file."""
    values = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("%s:%d: expected key = value" % (path, n))
            key, raw = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _CASTS:
                raise ConfigError("%s:%d: unknown key %r" % (path, n, key))
            values[key] = _cast(key, raw)
    src = values.get("source")
    if src and not os.path.isabs(src):
        values["source"] = os.path.join(os.path.dirname(os.path.abspath(path)), src)
    return values


def load_config(path: Optional[str] = None, **overrides) -> RunConfig:
    """File values first, then every override that is not None."""
    values = read_config(path) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
