"""Fundamental lower bound on the radiation Q-factor.

Solves  minimize I^H W I  subject to  I^H R0 I = 1,  I^H X I = 0  by scalar
dualization: for a multiplier nu the inner problem is a generalized
eigenvalue problem, and the self-resonance constraint is driven to zero by
a bracketed bisection on nu.  The reported bound carries the same 1/2
prefactor as the stored-energy Q metric, so shapes compare directly.

The inner solve runs over the full current space with the roles of the two
matrices swapped (largest eigenvalue of R0 against W + nu X), which keeps
the semidefensite, numerically low-rank R0 on the safe side of the pencil
and lets non-radiating current components trade stored energy as they do
physically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .operators import OperatorSet

__all__ = ["BoundResult", "BoundError", "solve_bound", "normalize"]

_RANK_TOL = 1e-10
_NU_RTOL = 1e-10
_DEGEN_RTOL = 1e-8


class BoundError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundResult:
    q_lb: float
    optimal_current: np.ndarray
    nu: float
    iterations: int
    residuals: dict

    def as_dict(self) -> dict:
        return {
            "q_lb": self.q_lb,
            "nu": self.nu,
            "iterations": self.iterations,
            "residuals": self.residuals,
        }


def _solve_inner(w, r0, x, nu):
    """Minimizer of I^H (W + nu X) I with I^H R0 I = 1, via the swapped pencil."""
    a = w + nu * x
    n = a.shape[0]
    mu, vec = la.eigh(r0, a, subset_by_index=[n - 1, n - 1])
    if mu[0] <= 0:
        raise la.LinAlgError("pencil lost positivity")
    i = vec[:, 0]
    i = i / np.sqrt(float(i @ r0 @ i))
    return i, 1.0 / float(mu[0])


def _resonance_mismatch(i, x):
    return float(i @ x @ i)


def _mix_degenerate(i1, i2, x, r0):
    """Zero the X-form inside a two-dimensional minimal eigenspace."""
    x2 = np.array([[i1 @ x @ i1, i1 @ x @ i2], [i2 @ x @ i1, i2 @ x @ i2]])
    r2 = np.array([[i1 @ r0 @ i1, i1 @ r0 @ i2], [i2 @ r0 @ i1, i2 @ r0 @ i2]])
    mu, c = la.eigh(x2, r2)
    if mu[0] > 0 or mu[-1] < 0:
        return None
    a = np.sqrt(mu[-1] / (mu[-1] - mu[0]))
    b = np.sqrt(-mu[0] / (mu[-1] - mu[0]))
    v1, v2 = c[:, 0], c[:, -1]
    mix = a * (v1[0] * i1 + v1[1] * i2) + b * (v2[0] * i1 + v2[1] * i2)
    return mix / np.sqrt(float(mix @ r0 @ mix))


def solve_bound(ops_or_w, r0=None, x=None, d_mask=None) -> BoundResult:
    """Lowest self-resonant Q over all currents in the bounding region.

    Accepts either an OperatorSet (optionally with a DOF mask restricting
    the current support) or the three matrices (W, R0, X) directly.
    """
    if isinstance(ops_or_w, OperatorSet):
        ops = ops_or_w
        w_m, r0_m, x_m = ops.w, ops.r0, ops.x_total
        if d_mask is not None:
            idx = np.unique(np.asarray(list(d_mask), dtype=np.int64))
            sub = np.ix_(idx, idx)
            w_m, r0_m, x_m = w_m[sub], r0_m[sub], x_m[sub]
    else:
        w_m, r0_m, x_m = ops_or_w, r0, x
        if d_mask is not None:
            idx = np.unique(np.asarray(list(d_mask), dtype=np.int64))
            sub = np.ix_(idx, idx)
            w_m, r0_m, x_m = w_m[sub], r0_m[sub], x_m[sub]

    ev_r0 = np.linalg.eigvalsh(r0_m)
    if ev_r0[-1] <= 0 or not np.any(ev_r0 > _RANK_TOL * ev_r0[-1]):
        raise BoundError("radiation matrix is numerically rank-zero")

    iterations = 0

    def inner(nu):
        nonlocal iterations
        iterations += 1
        return _solve_inner(w_m, r0_m, x_m, nu)

    i0, lam0 = inner(0.0)
    h0 = _resonance_mismatch(i0, x_m)
    x_scale = float(np.linalg.norm(x_m))
    w_scale = float(np.linalg.norm(w_m))
    if x_scale == 0 or abs(h0) <= 1e-12 * w_scale / max(ev_r0[-1], 1e-300):
        return _finish(w_m, r0_m, x_m, i0, 0.0, iterations)

    # h(nu) = I^H X I at the inner minimizer is non-increasing in nu;
    # expand a bracket from +-|W|/|X| until the sign flips
    step = np.sign(h0) * w_scale / x_scale
    lo, h_lo = 0.0, h0
    hi = step
    for _ in range(200):
        try:
            i_hi, _ = inner(hi)
            h_hi = _resonance_mismatch(i_hi, x_m)
        except la.LinAlgError:
            hi = 0.5 * (lo + hi)
            continue
        if np.sign(h_hi) != np.sign(h_lo):
            break
        lo, h_lo = hi, h_hi
        hi *= 2.0
    else:
        raise BoundError(
            f"no sign change of the resonance constraint over nu bracket "
            f"[{lo:.3e}, {hi:.3e}] (values {h_lo:.3e}, {h_hi:.3e})"
        )

    width = abs(hi - lo)
    best = None
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        i_mid, lam = inner(mid)
        h_mid = _resonance_mismatch(i_mid, x_m)
        best = (i_mid, mid)
        if np.sign(h_mid) == np.sign(h_lo):
            lo, h_lo = mid, h_mid
        else:
            hi = mid
        if abs(hi - lo) <= _NU_RTOL * max(width, abs(mid), 1.0):
            break
    i_opt, nu_opt = best
    return _finish(w_m, r0_m, x_m, i_opt, nu_opt, iterations)


def _finish(w, r0, x, i, nu, iterations) -> BoundResult:
    # inside a (near) degenerate minimal eigenspace the constraint is met
    # by mixing the two eigenvectors rather than by the nu root alone
    n = w.shape[0]
    h = _resonance_mismatch(i, x)
    lam_i = float(i @ w @ i)
    if n >= 2 and abs(h) > _DEGEN_RTOL * max(lam_i, 1e-300):
        a = w + nu * x
        try:
            mu2, vec2 = la.eigh(r0, a, subset_by_index=[n - 2, n - 1])
            if mu2[0] > 0 and (mu2[1] - mu2[0]) <= _DEGEN_RTOL * mu2[1] * 10:
                cand = _mix_degenerate(vec2[:, 1], vec2[:, 0], x, r0)
                if cand is not None:
                    i, h = cand, _resonance_mismatch(cand, x)
        except la.LinAlgError:
            pass
    q_lb = 0.5 * float(i @ w @ i)
    resid_eig = np.linalg.norm(
        (w + nu * x) @ i - float(i @ (w + nu * x) @ i) * (r0 @ i)
    ) / (np.linalg.norm(w) * np.linalg.norm(i))
    residuals = {
        "resonance": float(abs(h)) / max(float(i @ w @ i), 1e-300),
        "normalization": float(abs(i @ r0 @ i - 1.0)),
        "eigen": float(resid_eig),
    }
    return BoundResult(q_lb, i, float(nu), iterations, residuals)


def normalize(objective_value: float, q_lb: float) -> float:
    """Normalized objective q = Q / Q_lb used by termination thresholds."""
    if q_lb <= 0:
        raise BoundError("bound must be positive to normalize")
    return objective_value / q_lb
