"""Run configuration: the flat TOML-subset config file, validation, presets.

Every run is reproducible from its config alone; the writers embed the
resolved key/value pairs as a comment block in each CSV artifact.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError

_MODES = ("periodic", "clamped")
_FORCINGS = ("none", "ramp_sin")
_INITS = ("zero", "cos_bump")
_SOLVERS = ("direct", "iterative")
_EXPERIMENTS = ("single_run", "energy_audit", "convergence_matrix")
_SAMPLING = ("left", "right")
_AXES = ("space", "time")


@dataclass
class SchemeConfig:
    """Physical constants, discretization, forcing and output knobs."""

    mu: float = 0.01
    rho_f: float = 1.0
    rho_s: float = 1.0
    gamma1: float = 0.1
    gamma2: float = 0.1
    L: float = 2.0
    nx: int = 40
    ny: int = 20
    tau: float = 2.5e-3
    T: float = 1.0
    lateral_mode: str = "periodic"
    forcing: str = "none"
    force_amplitude: float = 200.0
    force_cutoff: float = 0.2
    force_sampling: str = "right"
    init: str = "zero"
    bump_amplitude: float = 0.1
    eta_floor: float = 1e-6
    solver: str = "direct"
    solver_tol: float = 1e-12
    quad_degree: int = 6
    out_dir: str = "out"
    vtk_every: int = 0
    vtk_times: list = field(default_factory=list)

    def n_steps(self):
        n = int(round(self.T / self.tau))
        if abs(n * self.tau - self.T) > 1e-9 * max(self.T, 1.0):
            raise ConfigurationError(
                f"T = {self.T} is not an integer multiple of tau = {self.tau}")
        return n

    def validate(self):
        for key in ("mu", "rho_f", "rho_s", "gamma1", "gamma2", "L", "tau", "T"):
            val = getattr(self, key)
            if not np.isfinite(val) or val <= 0:
                raise ConfigurationError(f"config key '{key}' must be positive, got {val}")
        if self.nx < 2 or self.ny < 1:
            raise ConfigurationError(f"config keys 'nx'/'ny' invalid: {self.nx}, {self.ny}")
        if self.lateral_mode not in _MODES:
            raise ConfigurationError(f"config key 'lateral_mode' must be one of {_MODES}")
        if self.forcing not in _FORCINGS:
            raise ConfigurationError(f"config key 'forcing' must be one of {_FORCINGS}")
        if self.init not in _INITS:
            raise ConfigurationError(f"config key 'init' must be one of {_INITS}")
        if self.solver not in _SOLVERS:
            raise ConfigurationError(f"config key 'solver' must be one of {_SOLVERS}")
        if self.force_sampling not in _SAMPLING:
            raise ConfigurationError(f"config key 'force_sampling' must be one of {_SAMPLING}")
        if self.eta_floor <= 0 or self.solver_tol <= 0:
            raise ConfigurationError("config keys 'eta_floor'/'solver_tol' must be positive")
        self.n_steps()
        return self

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return SchemeConfig(**d).validate()

    def as_items(self):
        return sorted(asdict(self).items())


@dataclass
class ExperimentSpec:
    """What to run: a single run, an energy audit, or a convergence matrix."""

    kind: str = "single_run"
    axis: str = "space"
    ladder_nx: list = field(default_factory=list)
    ladder_tau: list = field(default_factory=list)
    ref_nx: int = 0
    ref_tau: float = 0.0
    threads: int = 1

    def validate(self, cfg):
        if self.kind not in _EXPERIMENTS:
            raise ConfigurationError(f"config key 'experiment' must be one of {_EXPERIMENTS}")
        if self.kind != "convergence_matrix":
            return self
        if self.axis not in _AXES:
            raise ConfigurationError(f"config key 'axis' must be one of {_AXES}")
        if self.axis == "space":
            if len(self.ladder_nx) < 2:
                raise ConfigurationError("config key 'ladder_nx' needs at least two entries")
            if any(b <= a for a, b in zip(self.ladder_nx, self.ladder_nx[1:])):
                raise ConfigurationError("config key 'ladder_nx' must be strictly refining")
            if self.ref_nx <= self.ladder_nx[-1]:
                raise ConfigurationError("config key 'ref_nx' must be the finest mesh")
            for nx in self.ladder_nx:
                if self.ref_nx % nx:
                    raise ConfigurationError(
                        f"config key 'ref_nx' = {self.ref_nx} is not nested over nx = {nx}")
        else:
            if len(self.ladder_tau) < 2:
                raise ConfigurationError("config key 'ladder_tau' needs at least two entries")
            if any(b >= a for a, b in zip(self.ladder_tau, self.ladder_tau[1:])):
                raise ConfigurationError("config key 'ladder_tau' must be strictly refining")
            if self.ref_tau >= self.ladder_tau[-1]:
                raise ConfigurationError("config key 'ref_tau' must be the finest time step")
            for tau in self.ladder_tau:
                ratio = tau / self.ref_tau
                if abs(ratio - round(ratio)) > 1e-9:
                    raise ConfigurationError(
                        f"config key 'ref_tau' = {self.ref_tau} does not divide tau = {tau}")
        return self


_CFG_KEYS = {f for f in SchemeConfig.__dataclass_fields__}
_EXP_KEYS = {"experiment", "axis", "ladder_nx", "ladder_tau", "ref_nx", "ref_tau",
             "threads"}


def parse_config(path):
    """Parse and validate a config file.

    Returns (SchemeConfig, ExperimentSpec).  Unknown keys are rejected, parse
    errors keep tomli's line information, validation errors name the key.
    """
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"config parse error in {path}: {exc}") from exc
    unknown = set(raw) - _CFG_KEYS - _EXP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    if "tau" not in raw:
        raise ConfigurationError("missing required config key 'tau'")
    cfg_kw = {k: v for k, v in raw.items() if k in _CFG_KEYS}
    if "nx" in cfg_kw and "ny" not in cfg_kw:
        cfg_kw["ny"] = max(1, int(cfg_kw["nx"]) // 2)
    try:
        cfg = SchemeConfig(**cfg_kw).validate()
    except TypeError as exc:
        raise ConfigurationError(f"bad config value type: {exc}") from exc
    spec = ExperimentSpec(
        kind=raw.get("experiment", "single_run"),
        axis=raw.get("axis", "space"),
        ladder_nx=list(raw.get("ladder_nx", [])),
        ladder_tau=list(raw.get("ladder_tau", [])),
        ref_nx=int(raw.get("ref_nx", 0)),
        ref_tau=float(raw.get("ref_tau", 0.0)),
        threads=int(raw.get("threads", 1)),
    ).validate(cfg)
    return cfg, spec


def forcing_function(cfg):
    """Interface force g(x1, t) or None.  The ramp_sin profile is
    A * t * sin(2 pi x1) while t <= cutoff, zero afterwards."""
    if cfg.forcing == "none":
        return None
    amp, cutoff = cfg.force_amplitude, cfg.force_cutoff

    def g(x, t):
        if t > cutoff:
            return np.zeros_like(x)
        return amp * t * np.sin(2.0 * np.pi * x)

    return g


def initial_interface_fields(cfg, surface):
    """Nodal (eta0, xi0) for the configured initial data."""
    n = surface.nnodes
    if cfg.init == "zero":
        eta0 = np.ones(n)
    elif cfg.init == "cos_bump":
        eta0 = 1.0 + cfg.bump_amplitude * np.cos(2.0 * np.pi * surface.node_x / cfg.L)
    else:
        raise ConfigurationError(f"unknown init: {cfg.init!r}")
    return eta0, np.zeros(n)
