"""Structured triangulation of the reference strip and its interface trace.

The reference domain is the rectangle (0, L) x (0, 1), meshed by an nx x ny
grid of congruent rectangles, each split along the lower-left to upper-right
diagonal.  In periodic mode the lateral boundaries are identified by vertex
aliasing at build time, so no downstream code ever sees periodicity
constraints; wrapped cells keep their unwrapped coordinates in cell_coords so
per-cell geometry stays affine and positive.
"""

import numpy as np

from .errors import ConfigurationError

PERIODIC = "periodic"
CLAMPED = "clamped"


class ReferenceMesh:
    """Uniform diagonal-split triangulation of (0, L) x (0, 1).

    Attributes
    ----------
    vertices : (nverts, 2) float array of canonical vertex coordinates
    cells : (ncells, 3) int array, counter-clockwise vertex triples
    cell_coords : (ncells, 3, 2) unwrapped per-cell vertex coordinates
    cell_column : (ncells,) grid column of each cell (0 .. nx-1)
    bottom_vertices, top_vertices, lateral_vertices : boundary index arrays
    """

    def __init__(self, L, nx, ny, lateral_mode):
        if lateral_mode not in (PERIODIC, CLAMPED):
            raise ConfigurationError(f"unknown lateral_mode: {lateral_mode!r}")
        if nx < 2 or ny < 1 or L <= 0:
            raise ConfigurationError(
                f"invalid mesh request: L={L}, nx={nx}, ny={ny} (need nx>=2, ny>=1, L>0)")
        self.L = float(L)
        self.nx = int(nx)
        self.ny = int(ny)
        self.lateral_mode = lateral_mode
        self.dx = self.L / self.nx
        self.dy = 1.0 / self.ny
        self.h = float(np.hypot(self.dx, self.dy))

        ncols = nx if lateral_mode == PERIODIC else nx + 1
        self.nverts = ncols * (ny + 1)
        ii, jj = np.meshgrid(np.arange(ncols), np.arange(ny + 1), indexing="ij")
        verts = np.empty((self.nverts, 2))
        vid = (jj * ncols + ii).ravel()
        verts[vid, 0] = (ii * self.dx).ravel()
        verts[vid, 1] = (jj * self.dy).ravel()
        self.vertices = verts

        def vert_id(i, j):
            if lateral_mode == PERIODIC:
                return j * ncols + (i % nx)
            return j * ncols + i

        self.ncells = 2 * nx * ny
        cells = np.empty((self.ncells, 3), dtype=np.int64)
        coords = np.empty((self.ncells, 3, 2))
        column = np.empty(self.ncells, dtype=np.int64)
        e = 0
        for j in range(ny):
            for i in range(nx):
                a = vert_id(i, j)
                b = vert_id(i + 1, j)
                c = vert_id(i + 1, j + 1)
                d = vert_id(i, j + 1)
                xl, xr = i * self.dx, (i + 1) * self.dx
                yb, yt = j * self.dy, (j + 1) * self.dy
                cells[e] = (a, b, c)
                coords[e] = ((xl, yb), (xr, yb), (xr, yt))
                column[e] = i
                cells[e + 1] = (a, c, d)
                coords[e + 1] = ((xl, yb), (xr, yt), (xl, yt))
                column[e + 1] = i
                e += 2
        self.cells = cells
        self.cell_coords = coords
        self.cell_column = column

        e1 = coords[:, 1] - coords[:, 0]
        e2 = coords[:, 2] - coords[:, 0]
        self.cell_areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

        jrow = np.arange(ncols)
        self.bottom_vertices = jrow.copy()
        self.top_vertices = self.ny * ncols + jrow
        if lateral_mode == CLAMPED:
            side = np.arange(ny + 1) * ncols
            self.lateral_vertices = np.unique(np.concatenate([side, side + nx]))
        else:
            self.lateral_vertices = np.empty(0, dtype=np.int64)

    def __repr__(self):
        return (f"ReferenceMesh(L={self.L}, nx={self.nx}, ny={self.ny}, "
                f"{self.lateral_mode}, {self.nverts} vertices, {self.ncells} cells)")


class SurfaceMesh:
    """Trace of the volume mesh on the top boundary x2 = 1."""

    def __init__(self, mesh):
        nx = mesh.nx
        self.lateral_mode = mesh.lateral_mode
        self.L = mesh.L
        self.seg_len = mesh.dx
        if mesh.lateral_mode == PERIODIC:
            self.nnodes = nx
            self.node_x = np.arange(nx) * mesh.dx
            right = (np.arange(nx) + 1) % nx
        else:
            self.nnodes = nx + 1
            self.node_x = np.arange(nx + 1) * mesh.dx
            right = np.arange(nx) + 1
        self.segments = np.column_stack([np.arange(nx), right]).astype(np.int64)
        self.parent_vertex = mesh.top_vertices.copy()
        # surface node i sits at the same x as volume vertex parent_vertex[i]
        assert np.array_equal(mesh.vertices[self.parent_vertex, 0], self.node_x)

    def __repr__(self):
        return f"SurfaceMesh({self.nnodes} nodes, {self.lateral_mode})"


def build_structured_mesh(L, nx, ny, lateral_mode):
    """Build the uniform diagonal-split triangulation of (0, L) x (0, 1)."""
    return ReferenceMesh(L, nx, ny, lateral_mode)


def refine(mesh):
    """Uniformly refine by halving both cell counts; coarse vertices are a
    subset of the fine ones bit-exactly (coordinates are i * (L/nx), and
    halving the spacing only rescales by powers of two)."""
    return ReferenceMesh(mesh.L, 2 * mesh.nx, 2 * mesh.ny, mesh.lateral_mode)


def surface_trace(mesh):
    """Interface mesh aligned with the volume mesh's top-boundary trace."""
    return SurfaceMesh(mesh)
