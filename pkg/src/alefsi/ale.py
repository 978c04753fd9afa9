"""Closed-form geometric fields of the explicit ALE map.

The map takes (x1, x2) on the reference strip to (x1, eta(x1) * x2), so

    F    = [[1, 0], [x2 * eta', eta]],       J = det F = eta,
    Finv = [[1, 0], [-x2 * eta' / eta, 1/eta]],
    M    = J * F^{-T} = [[eta, -x2 * eta'], [0, 1]],

all evaluated per quadrature point from the P1 interface height extended
constantly in x2.  No numerical inversion happens anywhere.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .structure import _vals


@dataclass
class AleGeometry:
    """Per-quadrature-point geometry arrays, all shaped (ncells, nq) or
    (ncells, nq, 2, 2)."""

    eta: np.ndarray        # J = eta at the quadrature points
    deta: np.ndarray       # d eta / d x1 (piecewise constant per column)
    DtJ: np.ndarray        # (eta_now - eta_prev) / tau at the points
    F: np.ndarray
    Finv: np.ndarray
    M: np.ndarray
    w: np.ndarray          # mesh velocity (0, x2 * DtJ), shape (ncells, nq, 2)
    eta_prev: np.ndarray   # previous height at the points (energy weights)
    tau: float


def _surface_nodes_per_cell(mesh):
    """Left/right interface node indices of each cell's grid column."""
    col = mesh.cell_column
    if mesh.lateral_mode == "periodic":
        return col, (col + 1) % mesh.nx
    return col, col + 1


def interface_at_points(mesh, tables, nodal):
    """Evaluate a P1 interface field at all volume quadrature points."""
    left, right = _surface_nodes_per_cell(mesh)
    s = tables.s_col
    v = np.asarray(nodal, dtype=float)
    return v[left][:, None] * (1.0 - s) + v[right][:, None] * s


def evaluate_geometry(eta_now, eta_prev, tau, mesh, tables, eta_floor=1e-6,
                      surface=None, step=None):
    """Build AleGeometry from the current and previous interface heights.

    Raises DegenerateGeometryError when the nodal minimum of eta_now is at or
    below eta_floor (the P1 minimum is attained at a node).
    """
    eta_now_v = _vals(eta_now)
    eta_prev_v = _vals(eta_prev)
    nmin = int(np.argmin(eta_now_v))
    if eta_now_v[nmin] <= eta_floor:
        x = surface.node_x[nmin] if surface is not None else None
        raise DegenerateGeometryError(
            f"interface height {eta_now_v[nmin]:.3e} at node {nmin} is at or "
            f"below the floor {eta_floor:.1e}"
            + (f" (x = {x:.4f})" if x is not None else "")
            + (f" at step {step}" if step is not None else ""),
            node=nmin, x=x, value=eta_now_v[nmin], step=step)

    left, right = _surface_nodes_per_cell(mesh)
    s = tables.s_col
    eta_q = eta_now_v[left][:, None] * (1.0 - s) + eta_now_v[right][:, None] * s
    etap_q = eta_prev_v[left][:, None] * (1.0 - s) + eta_prev_v[right][:, None] * s
    deta_c = (eta_now_v[right] - eta_now_v[left]) / mesh.dx
    deta_q = np.broadcast_to(deta_c[:, None], eta_q.shape)
    DtJ = (eta_q - etap_q) / tau
    x2 = tables.qp_x[:, :, 1]

    ncells, nq = eta_q.shape
    F = np.zeros((ncells, nq, 2, 2))
    F[..., 0, 0] = 1.0
    F[..., 1, 0] = x2 * deta_q
    F[..., 1, 1] = eta_q
    Finv = np.zeros_like(F)
    Finv[..., 0, 0] = 1.0
    Finv[..., 1, 0] = -x2 * deta_q / eta_q
    Finv[..., 1, 1] = 1.0 / eta_q
    M = np.zeros_like(F)
    M[..., 0, 0] = eta_q
    M[..., 0, 1] = -x2 * deta_q
    M[..., 1, 1] = 1.0
    w = np.zeros((ncells, nq, 2))
    w[..., 1] = x2 * DtJ
    return AleGeometry(eta=eta_q, deta=deta_q, DtJ=DtJ, F=F, Finv=Finv, M=M,
                       w=w, eta_prev=etap_q, tau=tau)


def mesh_velocity_field(geom):
    """Mesh velocity (0, x2 * DtJ) at the quadrature points."""
    return geom.w


def check_transport_consistency(geom, xi_prev, mesh, tables):
    """Assert that DtJ computed from the height difference agrees with the
    interface velocity that produced it.  Exact agreement is impossible in
    floating point once tau is small (the rounding of eta + tau*xi scales
    like eps * ||eta|| / tau), so the tolerance is scaled accordingly."""
    xi_q = interface_at_points(mesh, tables, _vals(xi_prev))
    eps = np.finfo(float).eps
    tol = 32.0 * eps * (np.max(np.abs(xi_q), initial=0.0)
                        + np.max(geom.eta) / geom.tau)
    err = np.max(np.abs(geom.DtJ - xi_q))
    if err > tol:
        raise AssertionError(
            f"DtJ vs interface velocity mismatch {err:.3e} exceeds scaled "
            f"tolerance {tol:.3e}")
    return err
