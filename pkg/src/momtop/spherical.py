"""Regular spherical vector waves and the radiation-matrix factorization.

The projection matrix U1 maps RWG coefficients to orthonormal spherical-wave
amplitudes; with U1 sampled on the same quadrature rule as the radiated part
of the impedance matrix, R0 = U1^T U1 holds up to wave-order truncation.
"""

from __future__ import annotations

from math import factorial

import numpy as np
from scipy.special import spherical_jn

from .assembly import ETA0, basis_arrays
from .mesh import Mesh

__all__ = ["default_l_max", "multi_indices", "regular_waves", "spherical_projection"]


def default_l_max(ka: float) -> int:
    """Standard mode-count heuristic for truncating the wave expansion."""
    return int(np.ceil(ka + 7.0 * ka ** (1.0 / 3.0) + 3.0))


def multi_indices(l_max: int) -> np.ndarray:
    """All (tau, sigma, l, m) rows with l <= l_max.

    tau: 1 = TE-type, 2 = TM-type wave; sigma: 0 = even (cos m phi),
    1 = odd (sin m phi, only for m > 0).
    """
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    rows = []
    for l in range(1, l_max + 1):
        for m in range(0, l + 1):
            sigmas = (0,) if m == 0 else (0, 1)
            for sigma in sigmas:
                for tau in (1, 2):
                    rows.append((tau, sigma, l, m))
    return np.array(rows, dtype=np.int64)


def _legendre_table(x: np.ndarray, l_max: int) -> np.ndarray:
    """Associated Legendre P_l^m(x) for all 0 <= m <= l <= l_max.

    Standard recurrences with the Condon-Shortley phase; returns an array
    of shape (l_max+1, l_max+1, len(x)) indexed [l, m].
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.maximum(1.0 - x * x, 0.0))
    p = np.zeros((l_max + 1, l_max + 1, x.size))
    p[0, 0] = 1.0
    for m in range(1, l_max + 1):
        p[m, m] = -(2 * m - 1) * s * p[m - 1, m - 1]
    for m in range(0, l_max):
        p[m + 1, m] = (2 * m + 1) * x * p[m, m]
    for m in range(0, l_max + 1):
        for l in range(m + 2, l_max + 1):
            p[l, m] = ((2 * l - 1) * x * p[l - 1, m] - (l + m - 1) * p[l - 2, m]) / (l - m)
    return p


def regular_waves(points: np.ndarray, k: float, l_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate real regular waves u_alpha(k r) at 3D points.

    Returns (indices, u) with u of shape (n_modes, n_points, 3) in Cartesian
    components.  The angular factors are orthonormal real vector spherical
    harmonics, radial factors j_l and its Riccati-Bessel derivative.
    """
    idx = multi_indices(l_max)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    r = np.linalg.norm(pts, axis=1)
    if np.any(r <= 0):
        raise ValueError("spherical waves undefined at the origin")
    ct = np.clip(pts[:, 2] / r, -1.0, 1.0)
    st = np.sqrt(np.maximum(1.0 - ct * ct, 1e-30))
    phi = np.arctan2(pts[:, 1], pts[:, 0])

    rhat = pts / r[:, None]
    that = np.column_stack([ct * np.cos(phi), ct * np.sin(phi), -st])
    phat = np.column_stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)])

    plm = _legendre_table(ct, l_max)
    x = k * r
    u = np.zeros((len(idx), len(pts), 3))
    for row, (tau, sigma, l, m) in enumerate(idx):
        norm = np.sqrt(
            (2 * l + 1) / (4 * np.pi) * factorial(l - m) / factorial(l + m)
        )
        if m > 0:
            norm *= np.sqrt(2.0)
        pl = plm[l, m]
        pl1 = plm[l - 1, m] if l - 1 >= m else np.zeros_like(pl)
        # dP/d(theta) = (l x P_l^m - (l+m) P_{l-1}^m) / sin(theta)
        dp_dtheta = (l * ct * pl - (l + m) * pl1) / st
        trig = np.cos(m * phi) if sigma == 0 else np.sin(m * phi)
        dtrig = -m * np.sin(m * phi) if sigma == 0 else m * np.cos(m * phi)
        y = norm * pl * trig
        y_t = norm * dp_dtheta * trig          # dY/d theta
        y_p = norm * pl * dtrig / st           # (1/sin) dY/d phi
        ll = np.sqrt(l * (l + 1))
        jl = spherical_jn(l, x)
        if tau == 1:
            vec = (y_p[:, None] * that - y_t[:, None] * phat) / ll
            u[row] = jl[:, None] * vec
        else:
            djl = spherical_jn(l, x, derivative=True) + jl / x
            a2 = (y_t[:, None] * that + y_p[:, None] * phat) / ll
            a3 = y[:, None] * rhat
            u[row] = djl[:, None] * a2 + ll * (jl / x)[:, None] * a3
    return idx, u


def spherical_projection(
    mesh: Mesh, k: float, l_max: int, rule: int = 3
) -> np.ndarray:
    """Projection matrix U1 (one row per wave) with R0 ~= U1^T U1.

    ``rule`` must match the rule used for the radiated part of the impedance
    matrix for the factorization identity to hold to machine precision.
    """
    ba = basis_arrays(mesh, rule)
    pts3 = np.column_stack([ba.flat_pts, np.zeros(len(ba.flat_pts))])
    _, u = regular_waves(pts3, k, l_max)
    u1 = u[:, :, 0] @ ba.ex + u[:, :, 1] @ ba.ey
    return k * np.sqrt(ETA0) * u1
