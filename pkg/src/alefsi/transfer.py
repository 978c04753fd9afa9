"""Nested-mesh transfer and error-norm accumulation for the convergence
study.

Coarse fields travel to the reference mesh by nodal P1 interpolation (exact
on nested uniform grids); coarse bubble components are dropped, so their
contribution is part of the measured error.  All norms are quadratic forms
in (vertex, bubble) coefficients and are evaluated through precomputed
fine-mesh matrices, which keeps a full time sweep cheap.
"""

import numpy as np
import scipy.sparse as sp

from .diagnostics import ErrorRecord
from .errors import ConfigurationError


def p1_point_eval_matrix(mesh, points):
    """Sparse operator evaluating a P1 vertex field at arbitrary points."""
    pts = np.asarray(points, dtype=float)
    x = pts[:, 0].copy()
    y = pts[:, 1]
    nx, ny = mesh.nx, mesh.ny
    if mesh.lateral_mode == "periodic":
        x = np.mod(x, mesh.L)
        ncols = nx
    else:
        ncols = nx + 1
    ic = np.clip(np.floor(x / mesh.dx).astype(np.int64), 0, nx - 1)
    jc = np.clip(np.floor(y / mesh.dy).astype(np.int64), 0, ny - 1)
    sx = x / mesh.dx - ic
    sy = y / mesh.dy - jc

    def vid(i, j):
        if mesh.lateral_mode == "periodic":
            return j * ncols + np.mod(i, nx)
        return j * ncols + i

    lower = sy <= sx
    va = vid(ic, jc)
    vb = vid(ic + 1, jc)
    vc = vid(ic + 1, jc + 1)
    vd = vid(ic, jc + 1)
    cols = np.where(lower[:, None], np.stack([va, vb, vc], axis=1),
                    np.stack([va, vc, vd], axis=1))
    lam_lower = np.stack([1.0 - sx, sx - sy, sy], axis=1)
    lam_upper = np.stack([1.0 - sy, sx, sy - sx], axis=1)
    vals = np.where(lower[:, None], lam_lower, lam_upper)
    rows = np.repeat(np.arange(len(pts)), 3)
    return sp.coo_matrix((vals.ravel(), (rows, cols.ravel())),
                         shape=(len(pts), mesh.nverts)).tocsr()


def surface_point_eval_matrix(surface, xs):
    """1D analogue of p1_point_eval_matrix on the interface mesh."""
    x = np.asarray(xs, dtype=float).copy()
    h = surface.seg_len
    nseg = len(surface.segments)
    if surface.lateral_mode == "periodic":
        x = np.mod(x, surface.L)
    ic = np.clip(np.floor(x / h).astype(np.int64), 0, nseg - 1)
    s = x / h - ic
    left = surface.segments[ic, 0]
    right = surface.segments[ic, 1]
    rows = np.repeat(np.arange(len(x)), 2)
    cols = np.stack([left, right], axis=1).ravel()
    vals = np.stack([1.0 - s, s], axis=1).ravel()
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(len(x), surface.nnodes)).tocsr()


def prolongation_matrix(coarse_mesh, fine_mesh):
    if coarse_mesh.lateral_mode != fine_mesh.lateral_mode or \
            coarse_mesh.L != fine_mesh.L:
        raise ConfigurationError("prolongation requires matching domains")
    if fine_mesh.nx % coarse_mesh.nx or fine_mesh.ny % coarse_mesh.ny:
        raise ConfigurationError("meshes are not nested")
    return p1_point_eval_matrix(coarse_mesh, fine_mesh.vertices)


def surface_prolongation_matrix(coarse_surface, fine_surface):
    return surface_point_eval_matrix(coarse_surface, fine_surface.node_x)


class NormContext:
    """Fine-mesh L2/H1 quadratic forms for P1 + bubble scalar fields."""

    def __init__(self, mesh, tables):
        self.mesh = mesh
        w = tables.wdet                    # (e, q)
        lam = tables.lam                   # (q, 3)
        bub = tables.phi[:, 3]             # (q,)
        gl = tables.grad_phi[:, :, :3, :]  # (e, q, 3, 2)
        gb = tables.grad_phi[:, :, 3, :]   # (e, q, 2)

        loc_m = np.einsum("eq,qa,qb->eab", w, lam, lam)
        loc_k = np.einsum("eq,eqad,eqbd->eab", w, gl, gl, optimize=True)
        rows = np.repeat(mesh.cells, 3, axis=1).ravel()
        cols = np.tile(mesh.cells, (1, 3)).ravel()
        shape = (mesh.nverts, mesh.nverts)
        self.M = sp.coo_matrix((loc_m.ravel(), (rows, cols)), shape=shape).tocsr()
        self.Kg = sp.coo_matrix((loc_k.ravel(), (rows, cols)), shape=shape).tocsr()
        self.mvb = np.einsum("eq,qa,q->ea", w, lam, bub)            # (e, 3)
        self.kvb = np.einsum("eq,eqad,eqd->ea", w, gl, gb, optimize=True)
        self.mbb = np.einsum("eq,q,q->e", w, bub, bub)
        self.kbb = np.einsum("eq,eqd,eqd->e", w, gb, gb)

    def mass_form(self, vert, bub=None):
        out = float(vert @ (self.M @ vert))
        if bub is not None:
            av = vert[self.mesh.cells]                 # (e, 3)
            out += 2.0 * float(np.einsum("e,ea,ea->", bub, self.mvb, av))
            out += float(np.einsum("e,e,e->", bub, self.mbb, bub))
        return out

    def stiffness_form(self, vert, bub=None):
        out = float(vert @ (self.Kg @ vert))
        if bub is not None:
            av = vert[self.mesh.cells]
            out += 2.0 * float(np.einsum("e,ea,ea->", bub, self.kvb, av))
            out += float(np.einsum("e,e,e->", bub, self.kbb, bub))
        return out


class ErrorAccumulator:
    """Streams (coarse snapshot, reference snapshot) pairs at coincident
    times and accumulates the six error norms."""

    def __init__(self, coarse_disc, fine_disc, tau_run):
        self.coarse = coarse_disc
        self.fine = fine_disc
        self.tau_run = float(tau_run)
        if coarse_disc.mesh is fine_disc.mesh or \
                (coarse_disc.mesh.nx == fine_disc.mesh.nx
                 and coarse_disc.mesh.ny == fine_disc.mesh.ny):
            self.P = None      # identical meshes: transfer is the identity
            self.Ps = None
        else:
            self.P = prolongation_matrix(coarse_disc.mesh, fine_disc.mesh)
            self.Ps = surface_prolongation_matrix(coarse_disc.surface,
                                                  fine_disc.surface)
        self.norms = NormContext(fine_disc.mesh, fine_disc.fluid.tables)
        self.sops = fine_disc.sops
        self.sup = {"eu": 0.0, "exi": 0.0, "eeta": 0.0, "gradeeta": 0.0,
                    "ezeta": 0.0}
        self.gradu_sq_sum = 0.0
        self.n_times = 0

    def _prolong(self, v):
        return v if self.P is None else self.P @ v

    def _prolong_s(self, v):
        return v if self.Ps is None else self.Ps @ v

    def add(self, coarse_snap, ref_snap):
        if abs(coarse_snap.t - ref_snap.t) > 1e-12 * max(1.0, abs(ref_snap.t)):
            raise ValueError(f"snapshot time mismatch: {coarse_snap.t} vs {ref_snap.t}")
        eu_sq = 0.0
        gu_sq = 0.0
        for c in (0, 1):
            d = self._prolong(coarse_snap.u_vertex[c::2]) - ref_snap.u_vertex[c::2]
            # on identical meshes the bubble dofs transfer trivially and enter
            # the error; on genuinely nested meshes the coarse bubbles are
            # dropped (not nodally transferable) and only the reference's count
            bub = None
            rb = ref_snap.u_bubble
            cb = coarse_snap.u_bubble if self.P is None else None
            if rb is not None or cb is not None:
                nb = len(rb) // 2 if rb is not None else len(cb) // 2
                bub = np.zeros(nb)
                if cb is not None:
                    bub += cb[c::2]
                if rb is not None:
                    bub -= rb[c::2]
            eu_sq += self.norms.mass_form(d, bub)
            gu_sq += self.norms.stiffness_form(d, bub)
        dxi = self._prolong_s(coarse_snap.xi) - ref_snap.xi
        deta = self._prolong_s(coarse_snap.eta) - ref_snap.eta
        dzeta = self._prolong_s(coarse_snap.zeta) - ref_snap.zeta
        s = self.sops
        self.sup["eu"] = max(self.sup["eu"], eu_sq)
        self.sup["exi"] = max(self.sup["exi"], s.l2_norm_sq(dxi))
        self.sup["eeta"] = max(self.sup["eeta"], s.l2_norm_sq(deta))
        self.sup["gradeeta"] = max(self.sup["gradeeta"], s.h1_product(deta, deta))
        self.sup["ezeta"] = max(self.sup["ezeta"], s.l2_norm_sq(dzeta))
        self.gradu_sq_sum += gu_sq
        self.n_times += 1

    def result(self):
        sq = {k: float(np.sqrt(max(v, 0.0))) for k, v in self.sup.items()}
        return ErrorRecord(
            h=self.coarse.mesh.h,
            tau=self.tau_run,
            eu_LiL2=sq["eu"],
            exi_LiL2=sq["exi"],
            eeta_LiL2=sq["eeta"],
            gradeeta_LiL2=sq["gradeeta"],
            ezeta_LiL2=sq["ezeta"],
            gradeu_L2L2=float(np.sqrt(max(self.tau_run * self.gradu_sq_sum, 0.0))),
        )
