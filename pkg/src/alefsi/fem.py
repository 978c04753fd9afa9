"""Finite element core: bases, dof bookkeeping, assembly, constrained solves.

The velocity space is the MINI enrichment (vertex P1 plus one cubic bubble
27*l1*l2*l3 per cell, two components each), pressure and interface fields are
continuous P1.  Assembly is vectorized over cells; the generic kernel
assembler here doubles as the correctness oracle for the specialized fluid
assembly path.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SolverError
from .mesh import CLAMPED, ReferenceMesh, SurfaceMesh


class CellBasisTables:
    """Values/gradients of the P1 + bubble basis at mapped quadrature points.

    Everything is precomputed once per (mesh, rule) pair:
      phi      (nq, 4)          basis values (barycentric, cell independent)
      grad_phi (ncells, nq, 4, 2) physical gradients
      detA     (ncells,)        affine jacobian determinants (= 2 * area)
      wdet     (ncells, nq)     quadrature weight times detA
      qp_x     (ncells, nq, 2)  mapped quadrature point coordinates
      s_col    (ncells, nq)     position of each point across its grid column
    """

    def __init__(self, mesh, rule):
        lam = rule.points            # (nq, 3)
        nq = rule.npts
        self.rule = rule
        self.lam = lam
        bub = 27.0 * lam[:, 0] * lam[:, 1] * lam[:, 2]
        self.phi = np.column_stack([lam, bub])  # (nq, 4)

        V = mesh.cell_coords
        e1 = V[:, 1] - V[:, 0]
        e2 = V[:, 2] - V[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self.detA = det
        g2 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
        g3 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
        g1 = -(g2 + g3)
        grad_lam = np.stack([g1, g2, g3], axis=1)          # (ncells, 3, 2)
        self.grad_lam = grad_lam

        grad_phi = np.empty((mesh.ncells, nq, 4, 2))
        grad_phi[:, :, :3, :] = grad_lam[:, None, :, :]
        l1, l2, l3 = lam[:, 0], lam[:, 1], lam[:, 2]
        grad_bub = 27.0 * (
            grad_lam[:, None, 0, :] * (l2 * l3)[None, :, None]
            + grad_lam[:, None, 1, :] * (l1 * l3)[None, :, None]
            + grad_lam[:, None, 2, :] * (l1 * l2)[None, :, None])
        grad_phi[:, :, 3, :] = grad_bub
        self.grad_phi = grad_phi

        self.qp_x = np.einsum("qv,evd->eqd", lam, V)
        self.wdet = rule.weights[None, :] * det[:, None]
        xl = mesh.cell_column * mesh.dx
        self.s_col = (self.qp_x[:, :, 0] - xl[:, None]) / mesh.dx


class P1ScalarSpace:
    """Continuous scalar P1 on the volume mesh (also the pressure space)."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.ndofs = mesh.nverts
        self.cell_dofs = mesh.cells
        self.nlocal = 3

    def local_tables(self, tables):
        nq = tables.phi.shape[0]
        val = np.broadcast_to(tables.phi[None, :, :3], (self.mesh.ncells, nq, 3))
        grad = tables.grad_phi[:, :, :3, :]
        return val, grad


class MiniScalarSpace:
    """Scalar P1 + per-cell bubble (one velocity component of the MINI pair)."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.ndofs = mesh.nverts + mesh.ncells
        self.cell_dofs = np.hstack(
            [mesh.cells, mesh.nverts + np.arange(mesh.ncells)[:, None]])
        self.nlocal = 4

    def local_tables(self, tables):
        nq = tables.phi.shape[0]
        val = np.broadcast_to(tables.phi[None], (self.mesh.ncells, nq, 4))
        return val, tables.grad_phi


class SurfaceSpace:
    """P1 on the interface mesh; clamped mode pins the two endpoints."""

    def __init__(self, surface):
        self.surface = surface
        self.ndofs = surface.nnodes
        self.cell_dofs = surface.segments
        self.nlocal = 2
        if surface.lateral_mode == CLAMPED:
            self.constrained_dofs = np.array([0, surface.nnodes - 1])
        else:
            self.constrained_dofs = np.empty(0, dtype=np.int64)
        self.free_dofs = np.setdiff1d(np.arange(self.ndofs), self.constrained_dofs)


class FluidVelocitySpace:
    """Two-component MINI velocity with the scheme's Dirichlet set.

    Dof layout: vertex v, component c -> 2*v + c;
    bubble of cell e, component c -> 2*nverts + 2*e + c.
    Constraints: both components on Gamma_D (bottom, plus lateral sides in
    clamped mode), first component on the top boundary.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self.n_vertex_dofs = 2 * mesh.nverts
        self.n_bubble_dofs = 2 * mesh.ncells
        self.ndofs = self.n_vertex_dofs + self.n_bubble_dofs
        dirichlet = [2 * mesh.bottom_vertices, 2 * mesh.bottom_vertices + 1,
                     2 * mesh.top_vertices]
        if mesh.lateral_mode == CLAMPED:
            dirichlet += [2 * mesh.lateral_vertices, 2 * mesh.lateral_vertices + 1]
        self.constrained_dofs = np.unique(np.concatenate(dirichlet))
        self.constraint_values = np.zeros(len(self.constrained_dofs))


class PressureSpace(P1ScalarSpace):
    pass


class SparseSystem:
    """One linear solve: CSR matrix, right-hand side, Dirichlet bookkeeping."""

    def __init__(self, matrix, rhs, constrained_dofs=None, constraint_values=None):
        self.matrix = matrix.tocsr()
        self.rhs = np.asarray(rhs, dtype=float)
        if constrained_dofs is None:
            constrained_dofs = np.empty(0, dtype=np.int64)
        self.constrained_dofs = np.asarray(constrained_dofs, dtype=np.int64)
        if constraint_values is None:
            constraint_values = np.zeros(len(self.constrained_dofs))
        self.constraint_values = np.asarray(constraint_values, dtype=float)

    @property
    def ndofs(self):
        return self.matrix.shape[0]

    def free_mask(self):
        free = np.ones(self.ndofs, dtype=bool)
        free[self.constrained_dofs] = False
        return free

    def reduced(self):
        """Symmetric row/column elimination with prescribed values moved to
        the right-hand side.  Returns (A_ff, b_f, free_index_array)."""
        free = self.free_mask()
        idx = np.flatnonzero(free)
        A = self.matrix
        b = self.rhs.copy()
        if len(self.constrained_dofs) and np.any(self.constraint_values != 0.0):
            g = np.zeros(self.ndofs)
            g[self.constrained_dofs] = self.constraint_values
            b -= A @ g
        Aff = A[idx][:, idx]
        return Aff.tocsc(), b[idx], idx

    def expand(self, x_free, idx):
        x = np.zeros(self.ndofs)
        x[idx] = x_free
        x[self.constrained_dofs] = self.constraint_values
        return x


def assemble_bilinear(domain, trial_space, test_space, kernel, quad, tables=None):
    """Assemble the matrix of a bilinear form given a per-quadrature-point
    integrand callback.

    Parameters
    ----------
    domain : ReferenceMesh or SurfaceMesh
    trial_space, test_space : spaces living on `domain`
    kernel : callable(ctx) -> (ncells, nlocal_test, nlocal_trial)
        ctx carries phi_test, phi_trial (ncells, nlocal), grad_test,
        grad_trial (ncells, nlocal, dim) and x (ncells, dim) for the current
        quadrature point; the assembler supplies weight * |detA| itself.
    quad : QuadratureRule (triangle rule for volume, segment rule for surface)

    Returns
    -------
    SparseSystem with a zero right-hand side and no constraints attached.
    """
    if getattr(trial_space, "mesh", None) is not getattr(test_space, "mesh", None):
        raise ConfigurationError("trial and test spaces live on different meshes")
    if isinstance(domain, ReferenceMesh):
        if tables is None:
            tables = CellBasisTables(domain, quad)
        val_test, grad_test = test_space.local_tables(tables)
        val_trial, grad_trial = trial_space.local_tables(tables)
        detw = tables.wdet
        xs = tables.qp_x
        ncells = domain.ncells
    elif isinstance(domain, SurfaceMesh):
        val, grad, xs, detw = _segment_tables(domain, quad)
        val_test = val_trial = val
        grad_test = grad_trial = grad
        ncells = len(domain.segments)
    else:
        raise ConfigurationError(f"cannot assemble on {type(domain).__name__}")

    nq = detw.shape[1]
    local = np.zeros((ncells, test_space.nlocal, trial_space.nlocal))

    class _Ctx:
        pass

    for q in range(nq):
        ctx = _Ctx()
        ctx.phi_test = val_test[:, q]
        ctx.phi_trial = val_trial[:, q]
        ctx.grad_test = grad_test[:, q]
        ctx.grad_trial = grad_trial[:, q]
        ctx.x = xs[:, q]
        local += detw[:, q, None, None] * kernel(ctx)

    rows = np.repeat(test_space.cell_dofs, trial_space.nlocal, axis=1).ravel()
    cols = np.tile(trial_space.cell_dofs, (1, test_space.nlocal)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)),
                      shape=(test_space.ndofs, trial_space.ndofs)).tocsr()
    return SparseSystem(A, np.zeros(test_space.ndofs))


def _segment_tables(surface, quad):
    s = quad.points  # (nq,) on [0, 1]
    nseg = len(surface.segments)
    nq = quad.npts
    val = np.broadcast_to(np.column_stack([1.0 - s, s])[None], (nseg, nq, 2))
    grad = np.empty((nseg, nq, 2, 1))
    grad[:, :, 0, 0] = -1.0 / surface.seg_len
    grad[:, :, 1, 0] = 1.0 / surface.seg_len
    xl = surface.node_x[surface.segments[:, 0]]
    xs = (xl[:, None] + s[None, :] * surface.seg_len)[:, :, None]
    detw = np.broadcast_to(quad.weights[None] * surface.seg_len, (nseg, nq))
    return val, grad, xs, detw


def mass_kernel(ctx):
    return np.einsum("ei,ej->eij", ctx.phi_test, ctx.phi_trial)


def stiffness_kernel(ctx):
    return np.einsum("eid,ejd->eij", ctx.grad_test, ctx.grad_trial)


class FrozenPattern:
    """Precomputed COO -> CSR reduction for matrices whose sparsity pattern
    never changes (only values do, e.g. across time steps).

    Optionally eliminates a fixed set of constrained dofs symmetrically while
    renumbering the rest, so the reduced system is rebuilt each step with one
    fancy-index and one reduceat.
    """

    def __init__(self, rows, cols, ndofs, constrained_dofs=None):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if constrained_dofs is not None and len(constrained_dofs):
            dmap = np.full(ndofs, -1, dtype=np.int64)
            free = np.ones(ndofs, dtype=bool)
            free[constrained_dofs] = False
            self.free_index = np.flatnonzero(free)
            dmap[self.free_index] = np.arange(len(self.free_index))
            rr = dmap[rows]
            cc = dmap[cols]
            self.keep = (rr >= 0) & (cc >= 0)
            rr = rr[self.keep]
            cc = cc[self.keep]
            self.n = len(self.free_index)
        else:
            self.keep = None
            self.free_index = np.arange(ndofs)
            rr, cc = rows, cols
            self.n = ndofs
        order = np.lexsort((cc, rr))
        rs, cs = rr[order], cc[order]
        first = np.ones(len(rs), dtype=bool)
        if len(rs):
            first[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        starts = np.flatnonzero(first)
        self.order = order
        self.starts = starts
        self.indices = cs[starts].astype(np.int32)
        counts = np.bincount(rs[starts], minlength=self.n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)

    def csr(self, values):
        v = values[self.keep] if self.keep is not None else values
        data = np.add.reduceat(v[self.order], self.starts)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()),
                             shape=(self.n, self.n))


def solve_sparse(system, tol=1e-12, method="direct"):
    """Solve the constrained system to a relative residual of `tol`.

    The direct path is a sparse LU factorization plus one step of iterative
    refinement if the raw residual misses the tolerance.  The iterative path
    is ILU-preconditioned LGMRES and exists for large-problem experiments;
    energy-identity work needs the direct path.
    """
    Aff, bf, idx = system.reduced()
    if Aff.shape[0] == 0:
        return system.expand(np.empty(0), idx)
    bnorm = np.linalg.norm(bf)
    if method == "direct":
        try:
            lu = spla.splu(Aff)
        except RuntimeError as exc:
            raise SolverError(f"sparse LU factorization failed: {exc}") from exc
        x = lu.solve(bf)
        if not np.all(np.isfinite(x)):
            raise SolverError("sparse LU produced non-finite solution (singular matrix?)")
        resid = np.linalg.norm(Aff @ x - bf)
        if resid > tol * max(bnorm, 1e-300):
            x = x + lu.solve(bf - Aff @ x)
            resid = np.linalg.norm(Aff @ x - bf)
        if resid > tol * max(bnorm, 1e-300) and bnorm > 0.0:
            raise SolverError(
                f"direct solve residual {resid:.3e} exceeds {tol:.1e} * ||b||",
                residual=resid)
    elif method == "iterative":
        x = _iterative_solve(Aff, bf, tol)
    else:
        raise ConfigurationError(f"unknown solver method: {method!r}")
    return system.expand(x, idx)


def _iterative_solve(Aff, bf, tol):
    if np.linalg.norm(bf) == 0.0:
        return np.zeros(Aff.shape[0])
    try:
        ilu = spla.spilu(Aff, drop_tol=1e-6, fill_factor=30.0)
        prec = spla.LinearOperator(Aff.shape, ilu.solve)
    except RuntimeError:
        prec = None
    x, info = spla.lgmres(Aff, bf, M=prec, rtol=tol, atol=0.0, maxiter=2000)
    if info != 0:
        raise SolverError(f"LGMRES did not converge (info={info})", residual=None)
    return x


def dof_count(mesh, which):
    """Published degree-of-freedom accounting before constraint elimination."""
    if which == "fluid_step1":
        return 2 * mesh.nverts + 2 * mesh.ncells + mesh.nverts
    if which == "structure_step2":
        nsurf = mesh.nx if mesh.lateral_mode != CLAMPED else mesh.nx + 1
        return 2 * nsurf
    raise ConfigurationError(f"unknown dof counter: {which!r}")
