"""Run configuration: YAML file plus command-line overrides."""
import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ConfigurationError
from .mesh import MAX_LEVEL


@dataclass
class Config:
    """All knobs of the experiments, with defaults.

    ``levels`` drives the refinement studies, ``mesh_level`` the single-mesh
    experiments. ``cgo_dx`` of 0 means ``min(cgo_h_list) / 8``.
    """

    mesh_level: int = 4
    levels: list = field(default_factory=lambda: [3, 4, 5])
    budget_H: float = 0.5
    budget_f: float = 0.5
    newton_tol: float = 1e-11
    newton_max_iter: int = 40
    fd_eps: list = field(default_factory=lambda: [4e-2, 2e-2, 1e-2, 5e-3])
    cgo_dx: float = 0.0
    cgo_h_list: list = field(default_factory=lambda: [0.4, 0.28, 0.2, 0.14, 0.1, 0.07, 0.05])
    cgo_z0: float = 0.1
    cgo_tol: float = 1e-10
    sp_h_list: list = field(default_factory=lambda: [0.1, 0.08, 0.06, 0.05, 0.04])
    sp_dx: float = 0.01
    gn_level: int = 5
    gn_reg: float = 1e-12
    gn_max_iter: int = 15
    n_directions: int = 8
    delta: float = 1e-2
    noise: float = 0.0
    gauge_tau: float = 0.05
    out_dir: str = "pmc_out"
    seed: int = 0

    def validate(self):
        pos = ["budget_H", "budget_f", "newton_tol", "cgo_tol", "sp_dx", "gn_reg", "delta", "gauge_tau"]
        for name in pos:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")
        for name in ("fd_eps", "cgo_h_list", "sp_h_list"):
            if not getattr(self, name) or any(not v > 0 for v in getattr(self, name)):
                raise ConfigurationError(f"{name} must be a non-empty list of positive numbers")
        if self.cgo_dx < 0 or self.noise < 0:
            raise ConfigurationError("cgo_dx and noise must be >= 0")
        for lv in [self.mesh_level, self.gn_level] + list(self.levels):
            if not (isinstance(lv, int) and 0 <= lv <= MAX_LEVEL):
                raise ConfigurationError(f"mesh levels must be integers in [0, {MAX_LEVEL}]")
        if self.newton_max_iter < 1 or self.gn_max_iter < 1 or self.n_directions < 0:
            raise ConfigurationError("iteration counts must be positive")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


FIELDS = {f.name: f for f in dataclasses.fields(Config)}


def _coerce(name, value):
    default = FIELDS[name].default
    if default is dataclasses.MISSING:
        default = FIELDS[name].default_factory()
    try:
        if isinstance(default, list):
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            elem = type(default[0]) if default else float
            return [elem(v) for v in value]
        if isinstance(default, bool):
            return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        return type(default)(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value for {name}: {value!r}") from exc


def make_config(values=None):
    values = dict(values or {})
    unknown = sorted(set(values) - set(FIELDS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    return Config(**{k: _coerce(k, v) for k, v in values.items()}).validate()


def load_config(path=None, overrides=None):
    """Config from a YAML mapping (optional) updated by ``overrides``; keys may use dashes."""
    values = {}
    if path:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a mapping")
        values.update({str(k).replace("-", "_"): v for k, v in data.items()})
    for k, v in (overrides or {}).items():
        values[k.replace("-", "_")] = v
    return make_config(values)
