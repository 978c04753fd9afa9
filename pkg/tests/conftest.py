"""Shared test fixtures and small builders."""

import numpy as np
import pytest

from alefsi.ale import evaluate_geometry
from alefsi.config import SchemeConfig
from alefsi.driver import Discretization
from alefsi.fluid import FluidState, FluidStep1, Step1Inputs
from alefsi.mesh import build_structured_mesh, surface_trace
from alefsi.structure import SurfaceField, SurfaceOperators


def make_fluid_setup(nx=10, ny=5, mode="periodic", L=2.0, mu=0.01, rho_f=1.0,
                     rho_s=1.0, tau=1e-3, gamma1=0.1, gamma2=0.1, quad_degree=6):
    mesh = build_structured_mesh(L, nx, ny, mode)
    surf = surface_trace(mesh)
    sops = SurfaceOperators(surf, gamma1, gamma2, rho_s=rho_s, tau=tau)
    fl = FluidStep1(mesh, surf, sops, mu, rho_f, rho_s, tau, quad_degree=quad_degree)
    return mesh, surf, sops, fl


def rest_inputs(mesh, surf, fl, eta=None, eta_prev=None, u_prev=None,
                xi_prev=None, zeta=None, g_load=None, tau=None):
    n = surf.nnodes
    eta = np.ones(n) if eta is None else eta
    eta_prev = eta if eta_prev is None else eta_prev
    geom = evaluate_geometry(eta, eta_prev, tau or fl.tau, mesh, fl.tables)
    if u_prev is None:
        u_prev = FluidState(np.zeros(fl.nu), np.zeros(mesh.nverts))
    xi_prev = SurfaceField(np.zeros(n)) if xi_prev is None else SurfaceField(np.asarray(xi_prev, float))
    zeta = SurfaceField(np.zeros(n)) if zeta is None else SurfaceField(np.asarray(zeta, float))
    return Step1Inputs(u_prev=u_prev, xi_prev=xi_prev, geom=geom,
                       eta_k=SurfaceField(np.asarray(eta, float)),
                       zeta_k=zeta, g_load=g_load), geom


def audit_config(**kw):
    base = dict(nx=10, ny=5, tau=1e-3, T=0.01, mu=0.01, rho_f=1.0, rho_s=1.0,
                gamma1=0.1, gamma2=0.1, L=2.0, lateral_mode="periodic",
                forcing="none", init="cos_bump", bump_amplitude=0.1)
    base.update(kw)
    return SchemeConfig(**base).validate()


@pytest.fixture(scope="session")
def small_disc():
    return Discretization(audit_config())
