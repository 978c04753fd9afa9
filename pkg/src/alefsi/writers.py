"""CSV and legacy-VTK artifact writers.

CSV schemas (fixed):
  energy: k,t,E,visc,D1,D2,identity_residual
  errors: h,tau,eu_LiL2,exi_LiL2,eeta_LiL2,gradeeta_LiL2,ezeta_LiL2,gradeu_L2L2
Each CSV starts with the resolved run configuration as a '#' comment block so
any artifact is reproducible from the file alone.
"""

import os

import numpy as np

ENERGY_HEADER = "k,t,E,visc,D1,D2,identity_residual"
ERROR_HEADER = "h,tau,eu_LiL2,exi_LiL2,eeta_LiL2,gradeeta_LiL2,ezeta_LiL2,gradeu_L2L2"


def _config_comment_lines(cfg):
    if cfg is None:
        return []
    return [f"# {key} = {value!r}" for key, value in cfg.as_items()]


def _ensure_dir(path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


def write_energy_csv(records, path, cfg=None):
    _ensure_dir(path)
    lines = _config_comment_lines(cfg) + [ENERGY_HEADER]
    for r in records:
        lines.append(f"{r.k},{r.t!r},{r.E!r},{r.visc!r},{r.D1!r},{r.D2!r},"
                     f"{r.identity_residual!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_error_csv(records, path, cfg=None):
    _ensure_dir(path)
    lines = _config_comment_lines(cfg) + [ERROR_HEADER]
    for r in records:
        lines.append(f"{r.h!r},{r.tau!r},{r.eu_LiL2!r},{r.exi_LiL2!r},"
                     f"{r.eeta_LiL2!r},{r.gradeeta_LiL2!r},{r.ezeta_LiL2!r},"
                     f"{r.gradeu_L2L2!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Read back one of our CSVs: (header list, float rows, comment lines)."""
    comments, header, rows = [], None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line)
            elif header is None:
                header = line.split(",")
            else:
                rows.append([float(v) for v in line.split(",")])
    return header, rows, comments


def write_rates_table(records, rates, axis, path, cfg=None):
    """Aligned-text convergence table with per-pair rates and the
    least-squares slope row appended."""
    _ensure_dir(path)
    from .diagnostics import NORM_NAMES
    label = "h" if axis == "space" else "tau"
    key = "h" if axis == "space" else "tau"
    cols = [label] + [n for name in NORM_NAMES for n in (name, "rate")]
    widths = [12] + [13, 6] * len(NORM_NAMES)
    out = []
    if cfg is not None:
        out.extend(_config_comment_lines(cfg))
    out.append("  ".join(f"{c:>{w}}" for c, w in zip(cols, widths)))
    for i, rec in enumerate(records):
        cells = [f"{getattr(rec, key):>12.4e}"]
        for name in NORM_NAMES:
            cells.append(f"{rec.norms()[name]:>13.5e}")
            if i == 0:
                cells.append(f"{'--':>6}")
            else:
                pr = rates[name]["pairwise"][i - 1]
                cells.append(f"{pr:>6.2f}" if pr is not None else f"{'--':>6}")
        out.append("  ".join(cells))
    cells = [f"{'ls-slope':>12}"]
    for name in NORM_NAMES:
        slope = rates[name]["slope"]
        cells.append(f"{'':>13}")
        cells.append(f"{slope:>6.2f}" if slope is not None else f"{'--':>6}")
    out.append("  ".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path


def write_vtk(mesh, eta_nodes, state, path, surface=None):
    """Legacy-VTK ASCII unstructured grid of the deformed configuration.

    Vertices pass through the ALE map (x1, eta(x1) * x2); point data holds
    the pressure, the vertex velocity (bubble part omitted, zero-padded to
    3 components) and the interface height extended constantly in x2.  On a
    periodic mesh the seam column is duplicated at x1 = L so cells do not
    wrap around in the rendering.
    """
    _ensure_dir(path)
    verts = mesh.vertices
    cells = mesh.cells
    nv = mesh.nverts
    eta_nodes = np.asarray(eta_nodes, dtype=float)

    # interface height at every vertex x-coordinate (P1 in x1)
    if surface is None:
        from .mesh import surface_trace
        surface = surface_trace(mesh)
    from .transfer import surface_point_eval_matrix
    eta_at_vertex = surface_point_eval_matrix(surface, verts[:, 0]) @ eta_nodes

    points = np.column_stack([verts[:, 0], eta_at_vertex * verts[:, 1]])
    pressure = state.pressure.copy() if state is not None else np.zeros(nv)
    vel = (state.velocity[:2 * nv].reshape(-1, 2).copy()
           if state is not None else np.zeros((nv, 2)))
    eta_field = eta_at_vertex.copy()
    conn = cells.copy()

    if mesh.lateral_mode == "periodic":
        # duplicate the x1 = 0 column at x1 = L for seam cells
        ncols = mesh.nx
        seam_src = np.arange(mesh.ny + 1) * ncols      # vertices with i = 0
        old_to_dup = {int(v): nv + j for j, v in enumerate(seam_src)}
        eta_L = eta_nodes[0]
        dup_pts = np.column_stack([np.full(mesh.ny + 1, mesh.L),
                                   eta_L * (np.arange(mesh.ny + 1) * mesh.dy)])
        points = np.vstack([points, dup_pts])
        pressure = np.concatenate([pressure, pressure[seam_src]])
        vel = np.vstack([vel, vel[seam_src]])
        eta_field = np.concatenate([eta_field, eta_field[seam_src]])
        seam_cells = np.flatnonzero(mesh.cell_column == mesh.nx - 1)
        conn = conn.copy()
        for e in seam_cells:
            for a in range(3):
                v = int(conn[e, a])
                # wrap vertices in the last column sit at i = 0
                if v in old_to_dup and mesh.cell_coords[e, a, 0] >= mesh.L - 0.5 * mesh.dx:
                    conn[e, a] = old_to_dup[v]

    npoints = len(points)
    ncells = len(conn)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write("alefsi deformed configuration\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {npoints} double\n")
        for p in points:
            fh.write(f"{p[0]!r} {p[1]!r} 0.0\n")
        fh.write(f"CELLS {ncells} {4 * ncells}\n")
        for c in conn:
            fh.write(f"3 {c[0]} {c[1]} {c[2]}\n")
        fh.write(f"CELL_TYPES {ncells}\n")
        fh.write("\n".join(["5"] * ncells) + "\n")
        fh.write(f"POINT_DATA {npoints}\n")
        fh.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
        fh.write("\n".join(repr(v) for v in pressure) + "\n")
        fh.write("VECTORS velocity double\n")
        for v in vel:
            fh.write(f"{v[0]!r} {v[1]!r} 0.0\n")
        fh.write("SCALARS eta double 1\nLOOKUP_TABLE default\n")
        fh.write("\n".join(repr(v) for v in eta_field) + "\n")
    return path
