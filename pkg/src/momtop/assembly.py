"""Dense matrix operators for the plate: impedance, material, excitation.

All operators act on edge-normalized RWG coefficients (the basis function of
edge n is divided by the edge length l_n), so every matrix is in ohms, the
current coefficients are in amperes and excitation entries in volts.

The radiated (real) part of the vacuum impedance matrix uses the smooth
dyadic sin-kernel sampled with one uniform quadrature rule for every
triangle pair.  That discretization is a Gram matrix of a positive kernel,
so positive semidefiniteness and the spherical-wave factorization hold
structurally, not merely to quadrature accuracy.  The reactive (imaginary)
part carries the 1/R singularity: regular pairs are integrated with the
same rule, while self and vertex-sharing pairs use extraction of the static
kernel with analytic triangle potential integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.constants as const
import scipy.sparse as sp

from .mesh import Mesh
from .quadrature import triangle_rule

__all__ = [
    "ETA0",
    "C0",
    "ExcitationSpec",
    "BasisArrays",
    "basis_arrays",
    "efie_matrix",
    "material_matrix",
    "lumped_diagonal",
    "excitation_vector",
    "stored_energy_matrices",
    "farfield_row",
]

ETA0 = float(np.sqrt(const.mu_0 / const.epsilon_0))
C0 = float(const.c)

_TINY = 1e-300


@dataclass(frozen=True)
class ExcitationSpec:
    """Fixed excitation: a delta gap at one DOF or an impinging plane wave."""

    kind: str  # "delta-gap" | "plane-wave"
    gap_dof: int | None = None
    direction: tuple[float, float, float] | None = None
    polarization: tuple[float, float, float] | None = None
    amplitude: float = 1.0

    def validate(self, n_dof: int) -> None:
        if self.kind == "delta-gap":
            if self.gap_dof is None or not 0 <= self.gap_dof < n_dof:
                raise ValueError(f"gap DOF {self.gap_dof} outside [0, {n_dof})")
        elif self.kind == "plane-wave":
            d = np.asarray(self.direction, dtype=float)
            e = np.asarray(self.polarization, dtype=float)
            if abs(np.linalg.norm(d) - 1) > 1e-9 or abs(np.linalg.norm(e) - 1) > 1e-9:
                raise ValueError("direction and polarization must be unit vectors")
            if abs(float(d @ e)) > 1e-12:
                raise ValueError("polarization must be orthogonal to direction")
        else:
            raise ValueError(f"unknown excitation kind {self.kind!r}")


@dataclass(frozen=True)
class BasisArrays:
    """Quadrature points plus weighted RWG samples for one rule.

    ``ex``, ``ey`` and ``ediv`` are (n_points_total, n_dof) matrices whose
    entries carry the quadrature weight, so operator assembly reduces to
    kernel-matrix sandwiches E^T K E.
    """

    rule: int
    pts: np.ndarray        # (T, Q, 2) in-plane coordinates
    wts: np.ndarray        # (T, Q)
    ex: np.ndarray         # (T*Q, N)
    ey: np.ndarray         # (T*Q, N)
    ediv: np.ndarray       # (T*Q, N)
    tri_edges: np.ndarray  # (T, 3) DOF index or -1
    tri_signs: np.ndarray  # (T, 3)
    tri_opp: np.ndarray    # (T, 3, 2) opposite-vertex coordinates
    areas: np.ndarray      # (T,)

    @property
    def flat_pts(self) -> np.ndarray:
        return self.pts.reshape(-1, 2)


def _triangle_local_rwg(mesh: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nt = mesh.n_triangles
    tri_edges = np.full((nt, 3), -1, dtype=np.int64)
    tri_signs = np.zeros((nt, 3))
    tri_oppv = np.full((nt, 3), -1, dtype=np.int64)
    fill = np.zeros(nt, dtype=np.int64)
    for n in range(mesh.n_dof):
        for side, sign in ((0, 1.0), (1, -1.0)):
            t = mesh.edge_tris[n, side]
            s = fill[t]
            tri_edges[t, s] = n
            tri_signs[t, s] = sign
            tri_oppv[t, s] = mesh.edge_opposite[n, side]
            fill[t] += 1
    return tri_edges, tri_signs, tri_oppv


def basis_arrays(mesh: Mesh, rule: int) -> BasisArrays:
    if np.any(np.abs(mesh.vertices[:, 2]) > 0):
        raise ValueError("assembly expects a planar mesh in z = 0")
    bary, w = triangle_rule(rule)
    verts = mesh.vertices[mesh.triangles][:, :, :2]   # (T, 3, 2)
    pts = np.einsum("qb,tbc->tqc", bary, verts)
    areas = mesh.triangle_areas()
    wts = areas[:, None] * w[None, :]

    tri_edges, tri_signs, tri_oppv = _triangle_local_rwg(mesh)
    tri_opp = np.where(
        (tri_oppv >= 0)[:, :, None],
        mesh.vertices[tri_oppv.clip(min=0)][:, :, :2],
        0.0,
    )

    nt, nq = pts.shape[:2]
    n_dof = mesh.n_dof
    ex = np.zeros((nt * nq, n_dof))
    ey = np.zeros((nt * nq, n_dof))
    ediv = np.zeros((nt * nq, n_dof))
    rows = (np.arange(nt)[:, None, None] * nq + np.arange(nq)[None, None, :])
    rows = np.broadcast_to(rows, (nt, 3, nq))
    valid = tri_edges >= 0
    # psi_n = sign (r - p_opp) / (2A),  div psi_n = sign / A
    coef = tri_signs / (2 * areas[:, None])              # (T, 3)
    vx = coef[:, :, None] * (pts[:, None, :, 0] - tri_opp[:, :, None, 0])
    vy = coef[:, :, None] * (pts[:, None, :, 1] - tri_opp[:, :, None, 1])
    dv = (tri_signs / areas[:, None])[:, :, None] * np.ones((1, 1, nq))
    wq = wts[:, None, :]
    cols = np.broadcast_to(tri_edges[:, :, None], (nt, 3, nq))
    m = np.broadcast_to(valid[:, :, None], (nt, 3, nq))
    ex[rows[m], cols[m]] = (wq * vx)[m]
    ey[rows[m], cols[m]] = (wq * vy)[m]
    ediv[rows[m], cols[m]] = (wq * dv)[m]
    return BasisArrays(rule, pts, wts, ex, ey, ediv,
                       tri_edges, tri_signs, tri_opp, areas)


def _sin_kernel_parts(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic and radial coefficients of (1 + grad grad / k^2) sin(kR)/R.

    Returns (s0 + g1, g2 - g1) where s0 = sin x / x, g1 = (x cos x - sin x)/x^3
    and g2 = (2 sin x - 2 x cos x - x^2 sin x)/x^3; the kernel in units of
    k/(4 pi) is iso * I + ani * (u u^T) for unit separation vector u.
    """
    x = np.asarray(x)
    small = x < 0.1
    xs = np.where(small, 0.0, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        sx, cx = np.sin(xs), np.cos(xs)
        s0 = sx / xs
        g1 = (xs * cx - sx) / xs**3
        g2 = (-(xs**2) * sx - 2 * xs * cx + 2 * sx) / xs**3
    x2 = x * x
    s0_s = 1 - x2 / 6 + x2 * x2 / 120 - x2 * x2 * x2 / 5040
    g1_s = -1 / 3 + x2 / 30 - x2 * x2 / 840 + x2 * x2 * x2 / 45360
    g2_s = -1 / 3 + x2 / 10 - x2 * x2 / 168 + x2 * x2 * x2 / 6480
    s0 = np.where(small, s0_s, s0)
    g1 = np.where(small, g1_s, g1)
    g2 = np.where(small, g2_s, g2)
    return s0 + g1, g2 - g1


def _vertex_sharing_pairs(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Ordered triangle pairs (incl. self) sharing at least one vertex."""
    by_vertex: dict[int, list[int]] = {}
    for t, tri in enumerate(mesh.triangles):
        for v in tri:
            by_vertex.setdefault(int(v), []).append(t)
    pairs = set()
    for tris in by_vertex.values():
        for a in tris:
            for b in tris:
                pairs.add((a, b))
    arr = np.array(sorted(pairs), dtype=np.int64)
    return arr[:, 0], arr[:, 1]


def _static_potential_integrals(
    obs: np.ndarray, tri: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic in-plane integrals of 1/R and (r'-obs)/R over triangles.

    obs: (..., 2) observation points in the triangle plane.
    tri: (..., 3, 2) triangle vertices (counterclockwise).
    Returns I0 = int 1/R dS' (...) and Iu = int (r'-obs)/R dS' (..., 2).
    """
    i0 = np.zeros(obs.shape[:-1])
    iu = np.zeros(obs.shape[:-1] + (2,))
    scale2 = np.sum((tri[..., 1, :] - tri[..., 0, :]) ** 2, axis=-1)
    for e in range(3):
        v1 = tri[..., e, :]
        v2 = tri[..., (e + 1) % 3, :]
        s = v2 - v1
        ls = np.linalg.norm(s, axis=-1)
        sh = s / np.maximum(ls, _TINY)[..., None]
        uh = np.stack([sh[..., 1], -sh[..., 0]], axis=-1)  # outward for CCW
        lp = np.einsum("...c,...c->...", v2 - obs, sh)
        lm = np.einsum("...c,...c->...", v1 - obs, sh)
        p0 = np.einsum("...c,...c->...", v1 - obs, uh)
        p0sq = p0 * p0
        rp = np.linalg.norm(v2 - obs, axis=-1)
        rm = np.linalg.norm(v1 - obs, axis=-1)
        # (R + l)(R - l) = P0^2 in-plane; evaluate whichever form is stable
        with np.errstate(divide="ignore", invalid="ignore"):
            num = np.where(lp >= 0, rp + lp, p0sq / np.maximum(rp - lp, _TINY))
            den = np.where(lm >= 0, rm + lm, p0sq / np.maximum(rm - lm, _TINY))
            logt = np.log(num / den)
        on_line = p0sq <= 1e-24 * scale2
        logt = np.where(on_line, 0.0, logt)
        i0 = i0 + p0 * logt
        iu = iu + uh * (0.5 * (lp * rp - lm * rm + p0sq * logt))[..., None]
    return i0, iu


def _near_reactance_correction(
    mesh: Mesh,
    k: float,
    x0: np.ndarray,
    ba_out: BasisArrays,
    quad_inner: int,
) -> None:
    """Add the singular-pair contributions of the cos-kernel to x0 in place.

    Outer integrals use ``ba_out``'s rule; the inner kernel is split into
    (cos(kR) - 1)/R (smooth, quadrature) plus 1/R (analytic).
    """
    pi, qi = _vertex_sharing_pairs(mesh)
    bin_ = basis_arrays(mesh, quad_inner)

    obs = ba_out.pts[pi]                    # (P, Qo, 2)
    w_out = ba_out.wts[pi]                  # (P, Qo)
    src_pts = bin_.pts[qi]                  # (P, Qi, 2)
    w_in = bin_.wts[qi]                     # (P, Qi)
    tri_q = mesh.vertices[mesh.triangles[qi]][:, :, :2]   # (P, 3, 2)

    d = np.linalg.norm(obs[:, :, None, :] - src_pts[:, None, :, :], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        # (cos x - 1)/R = -2 sin^2(x/2)/R, finite and stable at R -> 0
        fsm = np.where(d > 0, -2 * np.sin(0.5 * k * d) ** 2 / d, 0.0)

    tri_b = np.broadcast_to(
        tri_q[:, None, :, :], (len(pi), obs.shape[1], 3, 2)
    )
    i0, iu = _static_potential_integrals(obs, tri_b)   # (P, Qo), (P, Qo, 2)

    # source basis data on the inner triangles
    sgn_q = ba_out.tri_signs[qi]            # (P, 3)
    opp_q = ba_out.tri_opp[qi]              # (P, 3, 2)
    edge_q = ba_out.tri_edges[qi]
    area_q = ba_out.areas[qi]
    sgn_p = ba_out.tri_signs[pi]
    opp_p = ba_out.tri_opp[pi]
    edge_p = ba_out.tri_edges[pi]
    area_p = ba_out.areas[pi]

    coef_q = sgn_q / (2 * area_q[:, None])  # (P, 3)
    coef_p = sgn_p / (2 * area_p[:, None])

    # smooth part of the inner vector integral, per source slot
    bsrc = coef_q[:, :, None, None] * (
        src_pts[:, None, :, :] - opp_q[:, :, None, :]
    )                                        # (P, 3, Qi, 2)
    vs = np.einsum("pij,pj,psjc->psic", fsm, w_in, bsrc)
    # analytic static part: int psi_n / R = coef * (Iu + (obs - p_opp) I0)
    va = coef_q[:, :, None, None] * (
        iu[:, None, :, :]
        + (obs[:, None, :, :] - opp_q[:, :, None, :]) * i0[:, None, :, None]
    )
    vin = vs + va                            # (P, 3, Qi->Qo, 2) over outer pts

    btst = coef_p[:, :, None, None] * (
        obs[:, None, :, :] - opp_p[:, :, None, :]
    )                                        # (P, 3, Qo, 2)
    vec_term = np.einsum("pi,pmic,psic->pms", w_out, btst, vin)

    s_in = np.einsum("pij,pj->pi", fsm, w_in) + i0   # (P, Qo)
    sc = np.einsum("pi,pi->p", w_out, s_in)
    div_p = sgn_p / area_p[:, None]
    div_q = sgn_q / area_q[:, None]
    sc_term = div_p[:, :, None] * div_q[:, None, :] * sc[:, None, None]

    contrib = (k * ETA0 / (4 * np.pi)) * (vec_term - sc_term / k**2)

    valid = (edge_p[:, :, None] >= 0) & (edge_q[:, None, :] >= 0)
    rows = np.broadcast_to(edge_p[:, :, None], valid.shape)[valid]
    cols = np.broadcast_to(edge_q[:, None, :], valid.shape)[valid]
    np.add.at(x0, (rows, cols), contrib[valid])


def efie_matrix(
    mesh: Mesh,
    k: float,
    quad_regular: int = 3,
    quad_near: int = 7,
    imag_only: bool = False,
) -> np.ndarray:
    """Vacuum impedance matrix Z0 = R0 + j X0 of the discretized EFIE."""
    if k <= 0:
        raise ValueError("wavenumber must be positive")
    ba = basis_arrays(mesh, quad_regular)
    p = ba.flat_pts
    dx = p[:, 0][:, None] - p[:, 0][None, :]
    dy = p[:, 1][:, None] - p[:, 1][None, :]
    d = np.hypot(dx, dy)
    x = k * d

    n = mesh.n_dof
    if not imag_only:
        iso, ani = _sin_kernel_parts(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_d = np.where(d > 0, 1.0 / d, 0.0)
        ux = dx * inv_d
        uy = dy * inv_d
        r0 = (
            ba.ex.T @ (iso + ani * ux * ux) @ ba.ex
            + ba.ey.T @ (iso + ani * uy * uy) @ ba.ey
        )
        sxy = ba.ex.T @ (ani * ux * uy) @ ba.ey
        r0 += sxy + sxy.T
        r0 *= k * k * ETA0 / (4 * np.pi)
        r0 = 0.5 * (r0 + r0.T)
    else:
        r0 = np.zeros((n, n))

    # far-pair cos kernel; singular pairs handled by extraction
    with np.errstate(divide="ignore", invalid="ignore"):
        kc = np.where(d > 0, np.cos(x) / d, 0.0)
    pi_, qi_ = _vertex_sharing_pairs(mesh)
    nq = ba.pts.shape[1]
    nt = mesh.n_triangles
    near_tt = np.zeros((nt, nt), dtype=bool)
    near_tt[pi_, qi_] = True
    kc[np.repeat(np.repeat(near_tt, nq, axis=0), nq, axis=1)] = 0.0

    x0 = (
        ba.ex.T @ kc @ ba.ex
        + ba.ey.T @ kc @ ba.ey
        - (ba.ediv.T @ kc @ ba.ediv) / k**2
    ) * (k * ETA0 / (4 * np.pi))
    _near_reactance_correction(mesh, k, x0, ba, quad_near)
    x0 = 0.5 * (x0 + x0.T)
    return r0 + 1j * x0


def material_matrix(mesh: Mesh, rho) -> sp.csr_array:
    """Sheet-resistivity Gram matrix (real, symmetric, PSD, sparse).

    ``rho`` is a scalar or per-triangle array of surface resistivities in
    ohms per square; the 3-point rule integrates the quadratic RWG overlap
    exactly.
    """
    rho_t = np.broadcast_to(np.asarray(rho, dtype=float), (mesh.n_triangles,))
    if np.any(rho_t < 0):
        raise ValueError("sheet resistivity must be nonnegative")
    ba = basis_arrays(mesh, 3)
    rows, cols, data = [], [], []
    for t in range(mesh.n_triangles):
        live = ba.tri_edges[t] >= 0
        loc = ba.tri_edges[t][live]
        if not len(loc):
            continue
        coef = ba.tri_signs[t][live] / (2 * ba.areas[t])
        diff = ba.pts[t][None, :, :] - ba.tri_opp[t][live][:, None, :]
        psi = coef[:, None, None] * diff          # (S, Q, 2)
        block = rho_t[t] * np.einsum("q,sqc,rqc->sr", ba.wts[t], psi, psi)
        s = len(loc)
        rows.extend(np.repeat(loc, s))
        cols.extend(np.tile(loc, s))
        data.extend(block.ravel())
    return sp.coo_array(
        (data, (rows, cols)), shape=(mesh.n_dof, mesh.n_dof)
    ).tocsr()


def lumped_diagonal(ports, omega: float, n_dof: int) -> np.ndarray:
    """Series-RLC diagonal contributions: R + j(omega L - 1/(omega C)).

    ``ports`` is an iterable of (dof, R, L, C); C = inf means no capacitor.
    """
    zl = np.zeros(n_dof, dtype=complex)
    seen = set()
    for dof, r, l, c in ports:
        if not 0 <= dof < n_dof:
            raise ValueError(f"port DOF {dof} outside [0, {n_dof})")
        if dof in seen:
            raise ValueError(f"duplicate port DOF {dof}")
        if c == 0:
            raise ValueError("C = 0 with finite omega divides by zero")
        seen.add(dof)
        xc = 0.0 if math.isinf(c) else 1.0 / (omega * c)
        zl[dof] = r + 1j * (omega * l - xc)
    return zl


def excitation_vector(
    mesh: Mesh, spec: ExcitationSpec, k: float, rule: int = 7
) -> np.ndarray:
    """Tested incident field: 1 V across a gap edge, or plane-wave integrals."""
    spec.validate(mesh.n_dof)
    v = np.zeros(mesh.n_dof, dtype=complex)
    if spec.kind == "delta-gap":
        v[spec.gap_dof] = spec.amplitude
        return v
    ba = basis_arrays(mesh, rule)
    d = np.asarray(spec.direction, dtype=float)
    e = np.asarray(spec.polarization, dtype=float)
    p = ba.flat_pts
    phase = np.exp(-1j * k * (p[:, 0] * d[0] + p[:, 1] * d[1]))
    v = spec.amplitude * (
        (phase * e[0]) @ ba.ex + (phase * e[1]) @ ba.ey
    )
    return v


def stored_energy_matrices(
    mesh: Mesh,
    k: float,
    delta: float = 1e-4,
    z0: np.ndarray | None = None,
    quad_regular: int = 3,
    quad_near: int = 7,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Energy matrices (W, Xm, Xe) from a central frequency difference.

    W = omega d Im{Z0} / d omega evaluated at k(1 +/- delta); the split
    Xm = (W + X0)/2, Xe = (W - X0)/2 holds exactly by construction.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    if z0 is None:
        z0 = efie_matrix(mesh, k, quad_regular, quad_near)
    zp = efie_matrix(mesh, k * (1 + delta), quad_regular, quad_near, imag_only=True)
    zm = efie_matrix(mesh, k * (1 - delta), quad_regular, quad_near, imag_only=True)
    w = (zp.imag - zm.imag) / (2 * delta)
    xm = 0.5 * (w + z0.imag)
    xe = 0.5 * (w - z0.imag)
    return w, xm, xe


def farfield_row(
    mesh: Mesh,
    k: float,
    direction,
    polarization,
    rule: int = 7,
) -> np.ndarray:
    """Far-field projection row; |F I|^2 / (2 eta0) is radiation intensity."""
    d = np.asarray(direction, dtype=float)
    e = np.asarray(polarization, dtype=float)
    if abs(np.linalg.norm(d) - 1) > 1e-9 or abs(np.linalg.norm(e) - 1) > 1e-9:
        raise ValueError("direction and polarization must be unit vectors")
    if abs(float(d @ e)) > 1e-12:
        raise ValueError("polarization must be orthogonal to direction")
    ba = basis_arrays(mesh, rule)
    p = ba.flat_pts
    phase = np.exp(1j * k * (p[:, 0] * d[0] + p[:, 1] * d[1]))
    row = (phase * e[0]) @ ba.ex + (phase * e[1]) @ ba.ey
    return (-1j * ETA0 * k / (4 * np.pi)) * row
