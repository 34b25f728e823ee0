import numpy as np
import pytest

from momtop.bounds import BoundError, normalize, solve_bound

from conftest import make_synthetic_ops


def _psd(rng, n, ridge=0.1):
    b = rng.standard_normal((n, n))
    return b @ b.T / n + ridge * np.eye(n)


def test_zero_reactance_gives_unconstrained_minimum():
    rng = np.random.default_rng(0)
    n = 8
    w = _psd(rng, n)
    r0 = _psd(rng, n, ridge=1e-3)
    x = np.zeros((n, n))
    res = solve_bound(w, r0, x)
    assert res.nu == 0.0
    lam = min(np.linalg.eigvalsh(np.linalg.inv(np.linalg.cholesky(r0)) @ w
                                 @ np.linalg.inv(np.linalg.cholesky(r0)).T))
    assert res.q_lb == pytest.approx(0.5 * lam, rel=1e-8)


def test_optimal_current_satisfies_constraints():
    rng = np.random.default_rng(1)
    n = 10
    w = _psd(rng, n)
    r0 = _psd(rng, n, ridge=1e-4)
    xs = rng.standard_normal((n, n))
    x = 0.5 * (xs + xs.T)
    res = solve_bound(w, r0, x)
    i = res.optimal_current
    assert abs(i @ r0 @ i - 1.0) <= 1e-10
    assert abs(i @ x @ i) / (i @ r0 @ i) <= 1e-6
    # stationarity residual of the eigen-solve
    assert res.residuals["eigen"] <= 1e-8


def test_monte_carlo_feasible_set_never_beats_bound():
    rng = np.random.default_rng(2)
    n = 6
    w = _psd(rng, n)
    r0 = _psd(rng, n, ridge=1e-3)
    xs = rng.standard_normal((n, n))
    x = 0.5 * (xs + xs.T)
    res = solve_bound(w, r0, x)

    best = np.inf
    total = 0
    while total < 1_000_000:
        batch = 100_000
        u = rng.standard_normal((batch, n))
        v = rng.standard_normal((batch, n))
        xu = np.einsum("bi,ij,bj->b", u, x, u)
        xv = np.einsum("bi,ij,bj->b", v, x, v)
        ok = np.sign(xu) != np.sign(xv)
        u, v, xu, xv = u[ok], v[ok], xu[ok], xv[ok]
        # complex mix u/sqrt|xu| + j v/sqrt|xv| zeroes the reactance form
        iu = u / np.sqrt(np.abs(xu))[:, None]
        iv = v / np.sqrt(np.abs(xv))[:, None]
        wf = (
            np.einsum("bi,ij,bj->b", iu, w, iu)
            + np.einsum("bi,ij,bj->b", iv, w, iv)
        )
        rf = (
            np.einsum("bi,ij,bj->b", iu, r0, iu)
            + np.einsum("bi,ij,bj->b", iv, r0, iv)
        )
        best = min(best, float(np.min(0.5 * wf / rf)))
        total += batch
    assert best >= res.q_lb * (1 - 1e-3)


def test_restricting_dofs_never_decreases_bound():
    rng = np.random.default_rng(3)
    ops = make_synthetic_ops(12, rng)
    full = solve_bound(ops).q_lb
    sub = solve_bound(ops, d_mask=range(8)).q_lb
    subsub = solve_bound(ops, d_mask=range(5)).q_lb
    assert sub >= full * (1 - 1e-9)
    assert subsub >= sub * (1 - 1e-9)


def test_rank_zero_radiation_matrix_rejected():
    n = 5
    w = np.eye(n)
    r0 = np.zeros((n, n))
    x = np.zeros((n, n))
    with pytest.raises(BoundError):
        solve_bound(w, r0, x)


def test_normalize_values():
    assert normalize(36.3, 36.3) == pytest.approx(1.0)
    assert normalize(50.5, 36.3) == pytest.approx(1.391, abs=5e-4)
    assert normalize(60.0, 36.3) > normalize(50.5, 36.3)
    with pytest.raises(BoundError):
        normalize(1.0, 0.0)


def test_paper_plate_bound_band(paper_plate):
    ops, _, _ = paper_plate
    res = solve_bound(ops)
    assert 36.3 * 0.85 <= res.q_lb <= 36.3 * 1.15
    # reported alongside: self-resonance and normalization residuals
    assert res.residuals["resonance"] <= 1e-6
    assert res.residuals["normalization"] <= 1e-10
