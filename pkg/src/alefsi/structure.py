"""Everything living on the interface mesh: the discrete Laplacian, the
elastic form, the Step-2 coupled solve and the fourth-order truncation field.

The discrete Laplacian convention: zeta(eta) is the unique zero-mean P1
function with  int zeta psi = int d_x eta d_x psi  for all interface test
functions, so zeta approximates -eta''.  The zero mean is enforced by one
Lagrange multiplier; on a periodic interface the multiplier vanishes
identically because constants are test functions, which is what keeps the
downstream energy identity exact.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DegenerateGeometryError
from .fem import SurfaceSpace
from .mesh import CLAMPED
from .quadrature import quad_rule_segment


@dataclass
class SurfaceField:
    """Coefficients of a P1 function on the interface mesh."""

    values: np.ndarray
    kind: str = "generic"   # eta | xi | zeta | delta_xi | generic

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def copy(self, kind=None):
        return SurfaceField(self.values.copy(), kind or self.kind)

    def __len__(self):
        return len(self.values)


def _vals(f):
    return f.values if isinstance(f, SurfaceField) else np.asarray(f, dtype=float)


class SurfaceOperators:
    """Mass/stiffness matrices and solvers on one interface mesh.

    Every surface integral in the scheme and in the diagnostics goes through
    the matrices built here, which is what makes the discrete energy algebra
    exact: there is exactly one M and one K per run.
    """

    def __init__(self, surface, gamma1, gamma2, rho_s=None, tau=None):
        self.surface = surface
        self.space = SurfaceSpace(surface)
        self.gamma1 = float(gamma1)
        self.gamma2 = float(gamma2)
        self.rho_s = rho_s
        self.tau = tau
        n = surface.nnodes
        self.n = n

        h = surface.seg_len
        segs = surface.segments
        mloc = (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])
        kloc = (1.0 / h) * np.array([[1.0, -1.0], [-1.0, 1.0]])
        rows = np.repeat(segs, 2, axis=1).ravel()
        cols = np.tile(segs, (1, 2)).ravel()
        nseg = len(segs)
        self.M = sp.coo_matrix((np.tile(mloc.ravel(), nseg), (rows, cols)),
                               shape=(n, n)).tocsr()
        self.K = sp.coo_matrix((np.tile(kloc.ravel(), nseg), (rows, cols)),
                               shape=(n, n)).tocsr()
        self.int_psi = np.asarray(self.M.sum(axis=1)).ravel()  # int of each hat

        self.free = self.space.free_dofs
        nf = len(self.free)
        self.nf = nf
        Mff = self.M[self.free][:, self.free]
        mf_col = sp.csr_matrix(self.int_psi[self.free][:, None])
        # bordered zero-mean Laplacian system, factored once
        zsys = sp.bmat([[Mff, mf_col], [mf_col.T, None]], format="csc")
        self._zeta_lu = spla.splu(zsys)
        self._step2_lu = None

    # -- basic quadratic forms -------------------------------------------

    def l2_product(self, a, b):
        return float(_vals(a) @ (self.M @ _vals(b)))

    def h1_product(self, a, b):
        return float(_vals(a) @ (self.K @ _vals(b)))

    def l2_norm_sq(self, a):
        return self.l2_product(a, a)

    def mean(self, a):
        return float(self.int_psi @ _vals(a))

    # -- operators --------------------------------------------------------

    def discrete_laplace(self, eta):
        """Zero-mean zeta with  int zeta psi = int eta' psi'  for all psi;
        approximates -eta''.  Linear in eta."""
        rhs = np.zeros(self.nf + 1)
        rhs[:-1] = (self.K @ _vals(eta))[self.free]
        sol = self._zeta_lu.solve(rhs)
        z = np.zeros(self.n)
        z[self.free] = sol[:-1]
        return SurfaceField(z, "zeta")

    def elastic_load(self, eta, zeta):
        """Vector of a_s(eta, zeta, psi_i) over all interface hats."""
        return self.gamma1 * (self.K @ _vals(eta)) + self.gamma2 * (self.K @ _vals(zeta))

    def elastic_form_apply(self, eta, zeta, psi):
        """a_s(eta, zeta, psi) = int (g1 eta' + g2 zeta') psi'."""
        return float(_vals(psi) @ self.elastic_load(eta, zeta))

    def delta_xi(self, xi):
        """Fourth-order truncation field g1*zeta(xi) + g2*zeta(zeta(xi))."""
        zx = self.discrete_laplace(xi)
        zzx = self.discrete_laplace(zx)
        return SurfaceField(self.gamma1 * zx.values + self.gamma2 * zzx.values,
                            "delta_xi")

    def surface_load(self, g, t, quad_degree=7):
        """Load vector int g(x, t) psi_i dx for an analytic force g."""
        rule = quad_rule_segment(quad_degree)
        segs = self.surface.segments
        xl = self.surface.node_x[segs[:, 0]]
        h = self.surface.seg_len
        xq = xl[:, None] + rule.points[None, :] * h
        gq = g(xq, t)
        w = rule.weights[None, :] * h
        out = np.zeros(self.n)
        np.add.at(out, segs[:, 0], np.sum(w * gq * (1.0 - rule.points)[None, :], axis=1))
        np.add.at(out, segs[:, 1], np.sum(w * gq * rule.points[None, :], axis=1))
        return out

    # -- scheme steps ------------------------------------------------------

    def _build_step2(self):
        if self.rho_s is None or self.tau is None:
            raise ConfigurationError("SurfaceOperators built without rho_s/tau "
                                     "cannot run Step 2")
        Mff = self.M[self.free][:, self.free]
        Kff = self.K[self.free][:, self.free]
        mf_col = sp.csr_matrix(self.int_psi[self.free][:, None])
        rs, tau = self.rho_s, self.tau
        g1, g2 = self.gamma1, self.gamma2
        A = sp.bmat([
            [(rs / tau) * Mff + tau * g1 * Kff, g2 * Kff, None],
            [-tau * Kff, Mff, mf_col],
            [None, mf_col.T, None],
        ], format="csc")
        self._step2_lu = spla.splu(A)

    def step2_solve(self, u_top, eta_k, zeta_k, g_k=None, eta_floor=0.0, step=None):
        """Coupled structure solve for (xi_k, zeta_{k+1}), then the exact
        interface update eta_{k+1} = eta_k + tau * xi_k.

        Parameters
        ----------
        u_top : trace of the new fluid velocity's vertical component
        eta_k, zeta_k : current interface height and its discrete Laplacian
        g_k : optional external load vector (already integrated against hats)

        Returns
        -------
        (xi_k, eta_k1, zeta_k1) as SurfaceFields.
        """
        if self._step2_lu is None:
            self._build_step2()
        rs, tau = self.rho_s, self.tau
        nf = self.nf
        rhs = np.zeros(2 * nf + 1)
        mom = (rs / tau) * (self.M @ _vals(u_top)) + self.gamma2 * (self.K @ _vals(zeta_k))
        if g_k is not None:
            mom = mom + _vals(g_k)
        rhs[:nf] = mom[self.free]
        rhs[nf:2 * nf] = (self.K @ _vals(eta_k))[self.free]
        sol = self._step2_lu.solve(rhs)
        xi = np.zeros(self.n)
        xi[self.free] = sol[:nf]
        zeta_k1 = np.zeros(self.n)
        zeta_k1[self.free] = sol[nf:2 * nf]
        eta_k1 = _vals(eta_k) + tau * xi
        if np.min(eta_k1) <= eta_floor:
            node = int(np.argmin(eta_k1))
            raise DegenerateGeometryError(
                f"interface height {eta_k1[node]:.3e} at node {node} "
                f"(x = {self.surface.node_x[node]:.4f}) dropped to the floor "
                f"{eta_floor:.1e}" + (f" at step {step}" if step is not None else ""),
                node=node, x=self.surface.node_x[node], value=eta_k1[node], step=step)
        return (SurfaceField(xi, "xi"), SurfaceField(eta_k1, "eta"),
                SurfaceField(zeta_k1, "zeta"))


def predict_initial(eta0, xi0, tau, eta_floor=0.0):
    """First-motion prediction eta_1 = eta_0 + tau * xi_0."""
    eta1 = _vals(eta0) + tau * _vals(xi0)
    if np.min(eta1) <= eta_floor:
        node = int(np.argmin(eta1))
        raise DegenerateGeometryError(
            f"predicted interface height {eta1[node]:.3e} at node {node} is "
            f"at or below the floor {eta_floor:.1e}", node=node, value=eta1[node])
    return SurfaceField(eta1, "eta")
