"""Mesh construction, refinement nestedness, published h ladder and the
surface trace."""

import numpy as np
import pytest

from alefsi.errors import ConfigurationError
from alefsi.mesh import build_structured_mesh, refine, surface_trace

# characteristic sizes of the published six-level ladder (3 significant digits)
LADDER_H = [2.83e-1, 1.41e-1, 7.07e-2, 3.54e-2, 1.77e-2, 8.84e-3]


def test_counts_periodic_10x5():
    mesh = build_structured_mesh(2.0, 10, 5, "periodic")
    assert mesh.nverts == 60
    assert mesh.ncells == 100
    assert mesh.h == pytest.approx(0.2 * np.sqrt(2.0), rel=1e-12)


def test_counts_clamped_2x1():
    mesh = build_structured_mesh(1.0, 2, 1, "clamped")
    assert mesh.nverts == 6
    assert mesh.ncells == 4
    assert np.allclose(mesh.cell_areas, 0.25)


def test_finest_ladder_h():
    mesh = build_structured_mesh(2.0, 320, 160, "periodic")
    assert mesh.h == pytest.approx(8.84e-3, rel=5e-3)


def test_cell_areas_positive_and_uniform():
    for mode in ("periodic", "clamped"):
        mesh = build_structured_mesh(2.0, 10, 5, mode)
        expected = (2.0 / 10) * (1.0 / 5) / 2.0
        assert np.allclose(mesh.cell_areas, expected, rtol=1e-14)
        assert np.isclose(mesh.cell_areas.sum(), 2.0, rtol=1e-14)


def test_ladder_matches_published_h_to_three_digits():
    mesh = build_structured_mesh(2.0, 10, 5, "periodic")
    for expected in LADDER_H:
        assert np.round(mesh.h, decimals=-int(np.floor(np.log10(mesh.h))) + 2) == \
            pytest.approx(expected, rel=5e-3)
        mesh = refine(mesh)


def test_refine_doubles_and_halves_h():
    mesh = build_structured_mesh(2.0, 10, 5, "periodic")
    fine = refine(mesh)
    assert (fine.nx, fine.ny) == (20, 10)
    assert fine.h == pytest.approx(mesh.h / 2, rel=1e-14)
    finer = refine(fine)
    assert finer.h == pytest.approx(7.07e-2, rel=5e-3)


@pytest.mark.parametrize("mode", ["periodic", "clamped"])
def test_refinement_is_nested(mode):
    mesh = build_structured_mesh(2.0, 6, 3, mode)
    fine = refine(mesh)
    fine_set = {tuple(v) for v in fine.vertices}
    for v in mesh.vertices:
        assert tuple(v) in fine_set  # bit-exact containment


def test_vertex_count_formulas():
    assert build_structured_mesh(2.0, 8, 4, "periodic").nverts == 8 * 5
    assert build_structured_mesh(2.0, 8, 4, "clamped").nverts == 9 * 5


def test_orientation_is_ccw():
    for mode in ("periodic", "clamped"):
        mesh = build_structured_mesh(3.0, 5, 4, mode)
        assert np.all(mesh.cell_areas > 0)


def test_invalid_requests_rejected():
    with pytest.raises(ConfigurationError):
        build_structured_mesh(2.0, 1, 5, "periodic")
    with pytest.raises(ConfigurationError):
        build_structured_mesh(2.0, 10, 0, "periodic")
    with pytest.raises(ConfigurationError):
        build_structured_mesh(-1.0, 10, 5, "periodic")
    with pytest.raises(ConfigurationError):
        build_structured_mesh(2.0, 10, 5, "dirichlet")


def test_surface_trace_periodic_counts():
    mesh = build_structured_mesh(2.0, 320, 160, "periodic")
    surf = surface_trace(mesh)
    assert surf.nnodes == 320


def test_surface_trace_clamped_nodes():
    mesh = build_structured_mesh(2.0, 2, 1, "clamped")
    surf = surface_trace(mesh)
    assert surf.nnodes == 3
    assert np.allclose(surf.node_x, [0.0, 1.0, 2.0])


def test_surface_trace_uniform_spacing_and_parents():
    mesh = build_structured_mesh(2.0, 10, 5, "periodic")
    surf = surface_trace(mesh)
    assert np.allclose(np.diff(surf.node_x), 0.2)
    # parents are exactly the top-boundary vertices, bijectively
    assert len(np.unique(surf.parent_vertex)) == surf.nnodes
    assert np.allclose(mesh.vertices[surf.parent_vertex, 1], 1.0)
