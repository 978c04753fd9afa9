"""Discrete energy, numerical dissipation, the exact energy-identity
residual, error norms against a reference run, and convergence rates.

Quadrature-consistency rule: every volume integral here reuses the Step-1
assembly tables and the closed-form ALE fields, and every surface integral
goes through the single pair of interface matrices.  Under that rule the
energy identity is plain algebra on the assembled forms and holds to solver
precision regardless of the quadrature degree.
"""

import math
from dataclasses import dataclass

import numpy as np

from .structure import _vals


@dataclass
class EnergyRecord:
    """One per-step row of the energy audit (CSV schema order)."""

    k: int
    t: float
    E: float
    visc: float
    D1: float
    D2: float
    identity_residual: float


@dataclass
class ErrorRecord:
    """The six Theorem-style norms of one run against a reference run."""

    h: float
    tau: float
    eu_LiL2: float
    exi_LiL2: float
    eeta_LiL2: float
    gradeeta_LiL2: float
    ezeta_LiL2: float
    gradeu_L2L2: float

    def norms(self):
        return {
            "eu_LiL2": self.eu_LiL2,
            "exi_LiL2": self.exi_LiL2,
            "eeta_LiL2": self.eeta_LiL2,
            "gradeeta_LiL2": self.gradeeta_LiL2,
            "ezeta_LiL2": self.ezeta_LiL2,
            "gradeu_L2L2": self.gradeu_L2L2,
        }


NORM_NAMES = ("eu_LiL2", "exi_LiL2", "eeta_LiL2", "gradeeta_LiL2",
              "ezeta_LiL2", "gradeu_L2L2")


def energy(disc, u, eta_weight, xi, eta_next, zeta_next):
    """Total energy at step k:
    (rho_f/2) int eta_k |u_k|^2 + (rho_s/2) ||xi_k||^2
    + (gamma1/2) ||d_x eta_{k+1}||^2 + (gamma2/2) ||zeta_{k+1}||^2."""
    from .ale import interface_at_points
    eta_qp = interface_at_points(disc.mesh, disc.fluid.tables, _vals(eta_weight))
    kin = disc.fluid.kinetic_energy(u.velocity, eta_qp)
    s = disc.sops
    cfg = disc.cfg
    return (kin
            + 0.5 * cfg.rho_s * s.l2_norm_sq(xi)
            + 0.5 * cfg.gamma1 * s.h1_product(eta_next, eta_next)
            + 0.5 * cfg.gamma2 * s.l2_norm_sq(zeta_next))


def dissipation_D1(disc, xi, zeta_xi, S):
    """tau^2/2 (g1 ||d_x xi||^2 + g2 ||dxxh xi||^2) + tau^2/(2 rho_s) ||S||^2,
    with zeta_xi the discrete Laplacian of xi and S = g1 zeta - g2 dxxh zeta."""
    s = disc.sops
    cfg = disc.cfg
    tau = cfg.tau
    return (0.5 * tau**2 * (cfg.gamma1 * s.h1_product(xi, xi)
                            + cfg.gamma2 * s.l2_norm_sq(zeta_xi))
            + 0.5 * tau**2 / cfg.rho_s * s.l2_norm_sq(S))


def dissipation_D2(disc, geom, u, u_prev, xi, xi_prev, zeta_xi, zeta_xi_prev,
                   S, S_prev):
    """Per-step numerical dissipation; the eta_{k-1} weight in the velocity
    difference term comes from the geometry of the same step.  The tau^3
    block carries the gamma weights produced by the energy-identity algebra
    (the theorem's unweighted statement is a typo against its own proof)."""
    s = disc.sops
    cfg = disc.cfg
    tau = cfg.tau
    fl = disc.fluid
    du = (u.velocity - u_prev.velocity) / tau
    duq = fl._velocity_at_qp(du)
    kin = 0.5 * tau * cfg.rho_f * float(
        np.einsum("eq,eq->", fl.tables.wdet * geom.eta_prev,
                  np.einsum("eqc,eqc->eq", duq, duq)))
    dxi = (_vals(xi) - _vals(xi_prev)) / tau
    dzx = (_vals(zeta_xi) - _vals(zeta_xi_prev)) / tau
    dS = (_vals(S) - _vals(S_prev)) / tau
    return (kin
            + 0.5 * tau * cfg.rho_s * s.l2_norm_sq(dxi)
            + 0.5 * tau * cfg.gamma1 * s.h1_product(xi, xi)
            + 0.5 * tau * cfg.gamma2 * s.l2_norm_sq(zeta_xi)
            + 0.5 * tau**3 * (cfg.gamma1 * s.h1_product(dxi, dxi)
                              + cfg.gamma2 * s.l2_norm_sq(dzx))
            + 0.5 * tau**3 / cfg.rho_s * s.l2_norm_sq(dS))


def energy_identity_residual(records, E0, D10, tau, m=None):
    """| E^m + D1^m + tau sum_{k<=m} (visc^k + D2^k) - E^0 - D1^0 |
    recomputed from the per-step rows (unforced runs)."""
    if m is None:
        m = len(records)
    acc = 0.0
    for rec in records[:m]:
        acc += tau * (rec.visc + rec.D2)
    last = records[m - 1]
    return abs(last.E + last.D1 + acc - E0 - D10)


def error_norms(run_result, ref_result):
    """Compare a stored run against a stored reference run on a nested finer
    grid; see transfer.ErrorAccumulator for the streaming variant."""
    from .transfer import ErrorAccumulator
    acc = ErrorAccumulator(run_result.disc, ref_result.disc, run_result.cfg.tau)
    ref_times = {snap.t: snap for snap in ref_result.snapshots}
    for snap in run_result.snapshots:
        if snap.t == 0.0:
            continue
        try:
            ref = ref_times[snap.t]
        except KeyError:
            raise ValueError(f"reference run has no snapshot at t = {snap.t}")
        acc.add(snap, ref)
    return acc.result()


def convergence_rates(records, axis="h"):
    """Per-adjacent-pair log2 rates and the least-squares slope of each norm
    along a refinement ladder.

    Returns {norm: {"pairwise": [...], "slope": float or None}}.
    """
    if len(records) < 2:
        raise ValueError("need at least two records to estimate rates")
    xs = np.array([getattr(r, "h" if axis == "h" else "tau") for r in records])
    if not (np.all(np.diff(xs) < 0) or np.all(np.diff(xs) > 0)):
        raise ValueError(f"records are not monotone in {axis}")
    out = {}
    for name in NORM_NAMES:
        es = np.array([r.norms()[name] for r in records])
        if np.any(es <= 0.0):
            out[name] = {"pairwise": [None] * (len(es) - 1), "slope": None}
            continue
        pairwise = list(np.log(es[:-1] / es[1:]) / np.log(xs[:-1] / xs[1:]))
        slope = float(np.polyfit(np.log(xs), np.log(es), 1)[0])
        out[name] = {"pairwise": pairwise, "slope": slope}
    return out


def least_squares_slope(xs, es):
    xs = np.asarray(xs, dtype=float)
    es = np.asarray(es, dtype=float)
    if np.any(es <= 0):
        return None
    return float(np.polyfit(np.log(xs), np.log(es), 1)[0])
