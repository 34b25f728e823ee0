"""Shared fixtures: real operator sets (cached per session) and synthetic ones."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from momtop.assembly import ExcitationSpec
from momtop.mesh import PlateSpec, build_mesh, central_gap_dof
from momtop.operators import OperatorSet, assemble_plate_operators


def make_synthetic_ops(n: int, rng: np.random.Generator) -> OperatorSet:
    """Random well-conditioned operator bundle with the real-system structure:
    complex symmetric Z0 with PSD real part, PD stored-energy matrix."""
    b = rng.standard_normal((n, n))
    r0 = b @ b.T / n + 1e-3 * np.eye(n)
    xs = rng.standard_normal((n, n))
    x0 = 0.5 * (xs + xs.T) * 2.0
    c = rng.standard_normal((n, n))
    w = c @ c.T / n + 0.5 * np.eye(n)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return OperatorSet(
        k=1.0,
        z0=r0 + 1j * x0,
        z_rho=sp.csr_array((n, n)),
        z_l=np.zeros(n, dtype=complex),
        v=v,
        w=w,
        xm=0.5 * (w + x0),
        xe=0.5 * (w - x0),
        u1=np.zeros((0, n)),
        l_chol=np.zeros((n, n)),
        f_rows=np.zeros((1, n), dtype=complex),
        f_dirs=np.array([[0.0, 0, 1, 1, 0, 0]]),
    )


@pytest.fixture(scope="session")
def toy_plate():
    """13-DOF grid (3x2 cells, 1:2 plate, ka=0.5) with a central delta gap."""
    spec = PlateSpec(1.0, 2.0, 3, 2, 0.5)
    mesh = build_mesh(spec)
    gap = central_gap_dof(mesh)
    ops, _ = assemble_plate_operators(spec, ExcitationSpec("delta-gap", gap_dof=gap))
    return ops, mesh, gap


@pytest.fixture(scope="session")
def medium_plate():
    """45-DOF grid used for matrix-property checks."""
    spec = PlateSpec(1.0, 2.0, 3, 6, 0.5)
    mesh = build_mesh(spec)
    gap = central_gap_dof(mesh)
    ops, _ = assemble_plate_operators(spec, ExcitationSpec("delta-gap", gap_dof=gap))
    return ops, mesh, gap


@pytest.fixture(scope="session")
def paper_plate():
    """The ka = 0.5 study grid: 1:2 plate meshed to exactly 345 DOF."""
    spec = PlateSpec(1.0, 2.0, 5, 25, 0.5)
    mesh = build_mesh(spec)
    gap = central_gap_dof(mesh)
    ops, _ = assemble_plate_operators(spec, ExcitationSpec("delta-gap", gap_dof=gap))
    return ops, mesh, gap
