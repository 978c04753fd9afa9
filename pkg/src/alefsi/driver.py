"""Partitioned time loop: prediction, fluid solve, structure solve, rolling
state, and the per-step diagnostics record."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import diagnostics
from .ale import check_transport_consistency, evaluate_geometry, interface_at_points
from .config import SchemeConfig, forcing_function, initial_interface_fields
from .errors import ConfigurationError, DegenerateGeometryError, SolverError
from .fluid import FluidState, FluidStep1, Step1Inputs
from .mesh import build_structured_mesh, surface_trace
from .structure import SurfaceField, SurfaceOperators, predict_initial, _vals


class Discretization:
    """All geometry- and space-level objects shared by one run."""

    def __init__(self, cfg):
        cfg.validate()
        self.cfg = cfg
        self.mesh = build_structured_mesh(cfg.L, cfg.nx, cfg.ny, cfg.lateral_mode)
        self.surface = surface_trace(self.mesh)
        self.sops = SurfaceOperators(self.surface, cfg.gamma1, cfg.gamma2,
                                     rho_s=cfg.rho_s, tau=cfg.tau)
        self.fluid = FluidStep1(self.mesh, self.surface, self.sops,
                                cfg.mu, cfg.rho_f, cfg.rho_s, cfg.tau,
                                quad_degree=cfg.quad_degree)

    @property
    def h(self):
        return self.mesh.h


@dataclass
class SimulationState:
    """Rolling state after step k (k = 0 right after init).

    Field indexing: u, xi are the step-k unknowns; eta is eta_{k+1} (next
    geometry, from Step 2 or the initial prediction); eta_prev is eta_k;
    zeta / zeta_prev follow eta / eta_prev one index behind the heights they
    were derived from (zeta = zeta_{k+1}).
    """

    k: int
    t: float
    u: FluidState
    xi: SurfaceField
    eta: SurfaceField
    eta_prev: SurfaceField
    zeta: SurfaceField
    zeta_prev: SurfaceField
    xi_prev: SurfaceField
    # diagnostics caches (see diagnostics module for their roles)
    S: np.ndarray
    S_prev: np.ndarray
    zeta_xi: np.ndarray
    zeta_xi_prev: np.ndarray
    E0: float
    D10: float
    cum_dissipation: float
    records: list = field(default_factory=list)
    last: Optional[dict] = None


@dataclass
class RunResult:
    cfg: SchemeConfig
    disc: Discretization
    state: SimulationState
    records: list
    snapshots: list = field(default_factory=list)


@dataclass
class Snapshot:
    """Nodal data kept for reference comparisons (bubbles only on demand)."""

    t: float
    u_vertex: np.ndarray
    u_bubble: Optional[np.ndarray]
    pressure: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray


def take_snapshot(state, disc, with_bubbles=False):
    nu_v = 2 * disc.mesh.nverts
    return Snapshot(
        t=state.t,
        u_vertex=state.u.velocity[:nu_v].copy(),
        u_bubble=state.u.velocity[nu_v:].copy() if with_bubbles else None,
        pressure=state.u.pressure.copy(),
        xi=_vals(state.xi).copy(),
        eta=_vals(state.eta_prev).copy(),
        zeta=_vals(state.zeta_prev).copy(),
    )


def init(cfg, eta0=None, xi0=None, u0=None, disc=None):
    """Set up the state at k = 0: prediction eta_1 = eta_0 + tau xi_0, the
    discrete Laplacians needed for the initial energy bookkeeping, and the
    initial energy E_0 and dissipation D1_0."""
    if disc is None:
        disc = Discretization(cfg)
    surface = disc.surface
    if eta0 is None or xi0 is None:
        e0, x0 = initial_interface_fields(cfg, surface)
        eta0 = eta0 if eta0 is not None else e0
        xi0 = xi0 if xi0 is not None else x0
    eta0 = SurfaceField(_vals(eta0), "eta")
    xi0 = SurfaceField(_vals(xi0), "xi")
    if u0 is None:
        u0 = FluidState(np.zeros(disc.fluid.nu), np.zeros(disc.mesh.nverts))
    if np.min(eta0.values) <= cfg.eta_floor:
        node = int(np.argmin(eta0.values))
        raise DegenerateGeometryError(
            f"initial interface height {eta0.values[node]:.3e} at node {node} "
            f"is at or below the floor {cfg.eta_floor:.1e}", node=node)

    sops = disc.sops
    eta1 = predict_initial(eta0, xi0, cfg.tau, cfg.eta_floor)
    zeta0 = sops.discrete_laplace(eta0)
    zeta1 = sops.discrete_laplace(eta1)
    z2 = sops.discrete_laplace(zeta1)
    S0 = cfg.gamma1 * zeta1.values + cfg.gamma2 * z2.values
    zeta_xi0 = sops.discrete_laplace(xi0).values

    E0 = diagnostics.energy(disc, u0, eta0, xi0, eta1, zeta1)
    D10 = diagnostics.dissipation_D1(disc, xi0, zeta_xi0, S0)
    return SimulationState(
        k=0, t=0.0, u=u0, xi=xi0, eta=eta1, eta_prev=eta0,
        zeta=zeta1, zeta_prev=zeta0, xi_prev=xi0,
        S=S0, S_prev=S0, zeta_xi=zeta_xi0, zeta_xi_prev=zeta_xi0,
        E0=E0, D10=D10, cum_dissipation=0.0)


def advance(state, cfg, disc, g=None):
    """One Step-1 + Step-2 cycle; mutates and returns the state, appending an
    EnergyRecord and stashing extra residual diagnostics in state.last."""
    k = state.k + 1
    t = k * cfg.tau
    fl = disc.fluid
    sops = disc.sops
    try:
        geom = evaluate_geometry(state.eta, state.eta_prev, cfg.tau, disc.mesh,
                                 fl.tables, eta_floor=cfg.eta_floor,
                                 surface=disc.surface, step=k)
        check_transport_consistency(geom, state.xi, disc.mesh, fl.tables)

        g_load = None
        if g is not None:
            t_sample = t if cfg.force_sampling == "right" else t - cfg.tau
            g_load = sops.surface_load(g, t_sample)

        inputs = Step1Inputs(u_prev=state.u, xi_prev=state.xi, geom=geom,
                             eta_k=state.eta, zeta_k=state.zeta, g_load=g_load)
        u_new, _ = fl.solve(inputs, solver_tol=cfg.solver_tol, method=cfg.solver)

        u_top = SurfaceField(u_new.velocity[fl.top_vy_dofs], "generic")
        xi_new, eta_next, zeta_next = sops.step2_solve(
            u_top, state.eta, state.zeta, g_k=None, eta_floor=cfg.eta_floor, step=k)
    except (DegenerateGeometryError, SolverError) as exc:
        if getattr(exc, "step", None) is None and hasattr(exc, "step"):
            exc.step = k
        raise

    # diagnostics bookkeeping (stored solves only; see module docstring)
    z2_next = sops.discrete_laplace(zeta_next)
    S_new = cfg.gamma1 * zeta_next.values + cfg.gamma2 * z2_next.values
    zeta_xi_new = (zeta_next.values - state.zeta.values) / cfg.tau

    E = diagnostics.energy(disc, u_new, state.eta, xi_new, eta_next, zeta_next)
    visc = fl.viscous_dissipation(u_new.velocity, geom)
    D1 = diagnostics.dissipation_D1(disc, xi_new, zeta_xi_new, S_new)
    D2 = diagnostics.dissipation_D2(disc, geom, u_new, state.u, xi_new, state.xi,
                                    zeta_xi_new, state.zeta_xi, S_new, state.S)
    cum = state.cum_dissipation + cfg.tau * (visc + D2)
    residual = abs(E + D1 + cum - state.E0 - state.D10)
    record = diagnostics.EnergyRecord(k=k, t=t, E=E, visc=visc, D1=D1, D2=D2,
                                      identity_residual=residual)

    delta_xi = (S_new - state.S) / cfg.tau
    noslip = float(np.max(np.abs(
        u_top.values - xi_new.values - cfg.tau**2 / cfg.rho_s * delta_xi)))
    divres = fl.divergence_residual(u_new, geom)
    state.last = {
        "noslip_residual": noslip,
        "divergence_residual": divres,
        "xi_inf": float(np.max(np.abs(xi_new.values))),
        "u_inf": float(np.max(np.abs(u_new.velocity))),
        "eta_min": float(np.min(eta_next.values)),
        "eta_max": float(np.max(eta_next.values)),
    }

    state.records.append(record)
    state.cum_dissipation = cum
    state.xi_prev = state.xi
    state.u = u_new
    state.xi = xi_new
    state.eta_prev = state.eta
    state.eta = eta_next
    state.zeta_prev = state.zeta
    state.zeta = zeta_next
    state.S_prev = state.S
    state.S = S_new
    state.zeta_xi_prev = state.zeta_xi
    state.zeta_xi = zeta_xi_new
    state.k = k
    state.t = t
    return state


def run(cfg, eta0=None, xi0=None, u0=None, disc=None, observer=None,
        snapshot_times=None, snapshots_with_bubbles=False):
    """Run the partitioned scheme over [0, T].

    observer(state, disc) fires after every completed step.  snapshot_times,
    when given, collects nodal Snapshots at those times (must lie on the time
    grid); times are matched by step index to avoid float drift.
    """
    if disc is None:
        disc = Discretization(cfg)
    state = init(cfg, eta0, xi0, u0, disc)
    g = forcing_function(cfg)
    n = cfg.n_steps()
    snap_steps = None
    result = RunResult(cfg=cfg, disc=disc, state=state, records=state.records)
    if snapshot_times is not None:
        snap_steps = {}
        for ts in snapshot_times:
            ks = int(round(ts / cfg.tau))
            if abs(ks * cfg.tau - ts) > 1e-9 * max(1.0, abs(ts)):
                raise ConfigurationError(f"snapshot time {ts} is off the time grid")
            snap_steps[ks] = ts
        if 0 in snap_steps:
            result.snapshots.append(take_snapshot(state, disc, snapshots_with_bubbles))
    for _ in range(n):
        advance(state, cfg, disc, g=g)
        if snap_steps is not None and state.k in snap_steps:
            result.snapshots.append(take_snapshot(state, disc, snapshots_with_bubbles))
        if observer is not None:
            observer(state, disc)
    return result
