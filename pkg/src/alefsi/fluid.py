"""Step-1 fluid subproblem: the linear saddle-point solve for the new
velocity/pressure pair on known geometry.

The momentum form per step k (all integrals on the reference strip):

  rho_f int (J D_t u + (1/2) DtJ u*) . phi         u* = 2 u_prev - u
  + (rho_f/2) int (phi . grad(u) - u . grad(phi)) Finv vhat J    (skew, frozen vhat)
  + int (2 mu sym(grad(u) Finv) - p I) : (grad(phi) Finv) J
  + (rho_s/tau) int_top (u - xi_prev e2) . phi
  + a_s(eta_k, zeta_k, phi . e2)  =  int_top g phi . e2

plus the continuity rows  int q grad(u) : M = 0.  The convection block is
antisymmetric by construction and the pressure blocks are exact negative
transposes of each other; both facts are what the discrete energy identity
feeds on, so they are arranged at the assembly level, not left to chance.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .fem import CellBasisTables, FluidVelocitySpace, FrozenPattern, SparseSystem
from .quadrature import quad_rule_triangle
from .structure import _vals


@dataclass
class FluidState:
    """MINI velocity coefficients (vertex pairs then bubble pairs) and vertex
    P1 pressure coefficients."""

    velocity: np.ndarray
    pressure: np.ndarray

    def copy(self):
        return FluidState(self.velocity.copy(), self.pressure.copy())


@dataclass
class Step1Inputs:
    """Data consumed by one fluid solve."""

    u_prev: FluidState
    xi_prev: object          # SurfaceField or array on the interface nodes
    geom: object             # AleGeometry built from (eta_k, eta_prev)
    eta_k: object
    zeta_k: object
    g_load: Optional[np.ndarray] = None   # pre-integrated surface load, or None


class FluidStep1:
    """Vectorized assembler/solver for the Step-1 system on one mesh.

    All sparsity patterns, basis tables and the constrained-dof reduction are
    precomputed at construction; per step only the value arrays change.
    """

    def __init__(self, mesh, surface, sops, mu, rho_f, rho_s, tau, quad_degree=6):
        self.mesh = mesh
        self.surface = surface
        self.sops = sops
        self.mu = float(mu)
        self.rho_f = float(rho_f)
        self.rho_s = float(rho_s)
        self.tau = float(tau)
        self.quad = quad_rule_triangle(quad_degree)
        self.tables = CellBasisTables(mesh, self.quad)
        self.vspace = FluidVelocitySpace(mesh)

        nv, nc = mesh.nverts, mesh.ncells
        self.nv, self.nc = nv, nc
        self.nu = 2 * nv + 2 * nc
        self.poff = self.nu
        self.ndofs = self.nu + nv

        # local velocity dof layout: 2*basis + component, bubble last
        vd = np.empty((nc, 8), dtype=np.int64)
        vd[:, 0:6:2] = 2 * mesh.cells
        vd[:, 1:6:2] = 2 * mesh.cells + 1
        vd[:, 6] = 2 * nv + 2 * np.arange(nc)
        vd[:, 7] = vd[:, 6] + 1
        self.vel_dofs = vd
        self.p_dofs = self.poff + mesh.cells

        rows_uu = np.repeat(vd, 8, axis=1).ravel()
        cols_uu = np.tile(vd, (1, 8)).ravel()
        rows_up = np.repeat(vd, 3, axis=1).ravel()
        cols_up = np.tile(self.p_dofs, (1, 8)).ravel()

        # static interface penalty (rho_s / tau) int u . phi, both components
        Ms = sops.M.tocoo()
        parent = surface.parent_vertex
        pen_rows = np.concatenate([2 * parent[Ms.row], 2 * parent[Ms.row] + 1])
        pen_cols = np.concatenate([2 * parent[Ms.col], 2 * parent[Ms.col] + 1])
        self._penalty_vals = np.tile((rho_s / tau) * Ms.data, 2)

        self._rows = np.concatenate([rows_uu, rows_up, cols_up, pen_rows])
        self._cols = np.concatenate([cols_uu, cols_up, rows_up, pen_cols])
        self.pattern_full = FrozenPattern(self._rows, self._cols, self.ndofs)
        self.pattern_reduced = FrozenPattern(
            self._rows, self._cols, self.ndofs,
            constrained_dofs=self.vspace.constrained_dofs)

        self.top_vy_dofs = 2 * parent + 1
        # reference-domain integral of each pressure hat (nullspace fallback)
        pint = np.zeros(nv)
        np.add.at(pint, mesh.cells.ravel(),
                  (self.tables.wdet[:, :, None] * self.tables.lam[None]).sum(axis=1).ravel())
        self._pressure_integral = pint

    # -- value computation -------------------------------------------------

    def _velocity_at_qp(self, u_coeffs):
        U = u_coeffs[self.vel_dofs].reshape(-1, 4, 2)
        return np.einsum("qb,ebc->eqc", self.tables.phi, U)

    def _velocity_grad_at_qp(self, u_coeffs):
        U = u_coeffs[self.vel_dofs].reshape(-1, 4, 2)
        return np.einsum("eqbd,ebc->eqcd", self.tables.grad_phi, U)

    def _uu_values(self, geom, vhat, include_convection=True, include_geometric=True,
                   include_viscous=True, include_inertia=True):
        t = self.tables
        wdet = t.wdet
        phi = t.phi
        J = geom.eta
        Ghat = np.einsum("eqbd,eqdf->eqbf", t.grad_phi, geom.Finv)

        S1 = np.zeros((self.nc, 4, 4))
        cmass = np.zeros_like(J)
        if include_inertia:
            cmass += (self.rho_f / self.tau) * J
        if include_geometric:
            cmass -= 0.5 * self.rho_f * geom.DtJ
        if include_inertia or include_geometric:
            S1 += np.einsum("eq,qb,qp->ebp", wdet * cmass, phi, phi, optimize=True)
        X = None
        if include_viscous:
            coeff = wdet * (self.mu * J)
            S1 += np.einsum("eq,eqbd,eqpd->ebp", coeff, Ghat, Ghat, optimize=True)
            X = np.einsum("eq,eqbj,eqpi->ebipj", coeff, Ghat, Ghat, optimize=True)
        if include_convection:
            Gv = np.einsum("eqbd,eqd->eqb", Ghat, vhat)
            C = np.einsum("eq,qb,eqp->ebp", wdet * (0.5 * self.rho_f * J), phi, Gv,
                          optimize=True)
            S1 += C - C.transpose(0, 2, 1)

        L = np.zeros((self.nc, 4, 2, 4, 2))
        if X is not None:
            L += X
        L[:, :, 0, :, 0] += S1
        L[:, :, 1, :, 1] += S1
        return L.reshape(self.nc, 8, 8)

    def _pressure_divergence_values(self, geom):
        # Dval[e,q,b,c] = grad(phi_b) . M[c,:]  (reference gradient)
        return np.einsum("eqbd,eqcd->eqbc", self.tables.grad_phi, geom.M)

    def assemble(self, inputs, include_convection=True, include_penalty=True,
                 include_elastic=True, include_geometric=True):
        """Assemble the full (unconstrained) Step-1 system.

        The term toggles exist for verification runs that isolate single
        blocks; production use keeps them all on.
        """
        geom = inputs.geom
        uq_prev = self._velocity_at_qp(inputs.u_prev.velocity)
        vhat = uq_prev - geom.w if include_convection else None

        vals_uu = self._uu_values(geom, vhat,
                                  include_convection=include_convection,
                                  include_geometric=include_geometric).ravel()
        Dval = self._pressure_divergence_values(geom)
        B_local = np.einsum("eq,qa,eqbc->eabc", self.tables.wdet, self.tables.lam,
                            Dval, optimize=True)
        # velocity rows get -B^T, pressure rows get +B: exact adjoints
        up_order = B_local.transpose(0, 2, 3, 1).ravel()   # (e, b, c, a)
        vals = [vals_uu, -up_order, up_order]
        if include_penalty:
            vals.append(self._penalty_vals)
        else:
            vals.append(np.zeros_like(self._penalty_vals))
        values = np.concatenate(vals)

        rhs = np.zeros(self.ndofs)
        # the data half of the geometric term, + rho_f DtJ u_prev . phi, lives
        # on the LEFT of the momentum form; crossing to the rhs flips its sign
        coef = np.zeros_like(geom.eta)
        coef += (self.rho_f / self.tau) * geom.eta
        if include_geometric:
            coef -= self.rho_f * geom.DtJ
        R = np.einsum("eq,eqc,qb->ebc", self.tables.wdet * coef, uq_prev,
                      self.tables.phi, optimize=True)
        np.add.at(rhs, self.vel_dofs.ravel(), R.reshape(self.nc, 8).ravel())
        if include_penalty:
            np.add.at(rhs, self.top_vy_dofs,
                      (self.rho_s / self.tau) * (self.sops.M @ _vals(inputs.xi_prev)))
        if include_elastic:
            np.add.at(rhs, self.top_vy_dofs,
                      -self.sops.elastic_load(inputs.eta_k, inputs.zeta_k))
        if inputs.g_load is not None:
            np.add.at(rhs, self.top_vy_dofs, inputs.g_load)

        A = self.pattern_full.csr(values)
        return SparseSystem(A, rhs, self.vspace.constrained_dofs,
                            self.vspace.constraint_values), values

    def solve(self, inputs, solver_tol=1e-12, method="direct"):
        """Assemble and solve; returns (FluidState, SparseSystem)."""
        system, values = self.assemble(inputs)
        x = self._solve_reduced(system, values, solver_tol, method)
        return FluidState(x[:self.nu], x[self.poff:]), system

    def _solve_reduced(self, system, values, tol, method):
        pat = self.pattern_reduced
        Aff = pat.csr(values).tocsc()
        bf = system.rhs[pat.free_index]
        try:
            x_f = _direct_or_iterative(Aff, bf, tol, method)
        except SolverError:
            # free pressure constant (degenerate configuration): retry once
            # with a pressure-mean Lagrange multiplier
            warnings.warn("Step-1 matrix singular; retrying with a pressure-mean "
                          "constraint", RuntimeWarning)
            pcol = np.zeros(self.ndofs)
            pcol[self.poff:] = self._pressure_integral
            col = sp.csc_matrix(pcol[pat.free_index][:, None])
            Aug = sp.bmat([[Aff, col], [col.T, None]], format="csc")
            x_f = _direct_or_iterative(Aug, np.concatenate([bf, [0.0]]), tol,
                                       method)[:-1]
        x = np.zeros(self.ndofs)
        x[pat.free_index] = x_f
        return x

    # -- diagnostics hooks ---------------------------------------------------

    def divergence_residual(self, state, geom):
        """max over pressure hats of | int q grad(u) : M |."""
        Dval = self._pressure_divergence_values(geom)
        U = state.velocity[self.vel_dofs].reshape(-1, 4, 2)
        div = np.einsum("eqbc,ebc->eq", Dval, U)
        r = np.zeros(self.nv)
        contrib = np.einsum("eq,qa->ea", self.tables.wdet * div, self.tables.lam)
        np.add.at(r, self.mesh.cells.ravel(), contrib.ravel())
        return float(np.max(np.abs(r)))

    def convection_block(self, geom, vhat_coeffs):
        """Velocity-velocity convection matrix alone, frozen transport field
        given by MINI coefficients; used by the skew-symmetry checks."""
        vhat = self._velocity_at_qp(np.asarray(vhat_coeffs, dtype=float))
        vals = self._uu_values(geom, vhat, include_convection=True,
                               include_geometric=False, include_viscous=False,
                               include_inertia=False).ravel()
        rows = np.repeat(self.vel_dofs, 8, axis=1).ravel()
        cols = np.tile(self.vel_dofs, (1, 8)).ravel()
        return sp.coo_matrix((vals, (rows, cols)),
                             shape=(self.nu, self.nu)).tocsr()

    def kinetic_energy(self, u_coeffs, eta_qp):
        """(1/2) rho_f int eta |u|^2 with the assembly quadrature."""
        uq = self._velocity_at_qp(u_coeffs)
        return 0.5 * self.rho_f * float(
            np.einsum("eq,eq->", self.tables.wdet * eta_qp,
                      np.einsum("eqc,eqc->eq", uq, uq)))

    def viscous_dissipation(self, u_coeffs, geom):
        """2 mu int eta |sym(grad(u) Finv)|^2 with the assembly quadrature."""
        Gu = self._velocity_grad_at_qp(u_coeffs)
        Guf = np.einsum("eqcd,eqdf->eqcf", Gu, geom.Finv)
        S = 0.5 * (Guf + Guf.transpose(0, 1, 3, 2))
        return 2.0 * self.mu * float(
            np.einsum("eq,eqcd,eqcd->", self.tables.wdet * geom.eta, S, S))


def assemble_step1(assembler, inputs, **toggles):
    """Functional facade over FluidStep1.assemble; returns the SparseSystem."""
    system, _ = assembler.assemble(inputs, **toggles)
    return system


def solve_step1(assembler, inputs, solver_tol=1e-12, method="direct"):
    state, _ = assembler.solve(inputs, solver_tol, method)
    return state


def divergence_residual(assembler, state, geom):
    return assembler.divergence_residual(state, geom)


def _direct_or_iterative(Aff, bf, tol, method):
    if method == "direct":
        try:
            lu = spla.splu(Aff)
        except RuntimeError as exc:
            raise SolverError(f"Step-1 factorization failed: {exc}") from exc
        x = lu.solve(bf)
        if not np.all(np.isfinite(x)):
            raise SolverError("Step-1 solve produced non-finite values")
        bnorm = np.linalg.norm(bf)
        resid = np.linalg.norm(Aff @ x - bf)
        if resid > tol * max(bnorm, 1e-300):
            x = x + lu.solve(bf - Aff @ x)
            resid = np.linalg.norm(Aff @ x - bf)
            if resid > tol * max(bnorm, 1e-300) and bnorm > 0:
                raise SolverError(f"Step-1 residual {resid:.3e} above tolerance",
                                  residual=resid)
        return x
    from .fem import _iterative_solve
    return _iterative_solve(Aff, bf, tol)
