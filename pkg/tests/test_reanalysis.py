import numpy as np
import pytest

from momtop.metrics import CompositeObjective, ObjectiveSpec
from momtop.reanalysis import (
    ADD,
    REMOVE,
    DegeneratePivotError,
    DenseSystem,
    SingularTruncationError,
    add_current,
    commit_add,
    commit_remove,
    init_state,
    rebuild_residual,
    remove_current,
    sweep_sensitivity,
    truncate_operator,
)
from momtop.shapes import Gene, derive_sets

from conftest import make_synthetic_ops


def random_system(n, rng, diag=None):
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    z = 0.5 * (m + m.T) + (diag if diag is not None else 1.5 * np.sqrt(n)) * (
        1 + 0.5j
    ) * np.eye(n)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return DenseSystem(z, v)


class QuadObjective:
    """Minimal batch objective over one symmetric real matrix (for tests)."""

    def __init__(self, a_full):
        self.a = a_full

    def value(self, i, active):
        act = np.asarray(active)
        return float((np.conj(i) @ (self.a[np.ix_(act, act)] @ i)).real)

    def removal_batch(self, state, p, r_loc):
        a = self.a[np.ix_(state.active, state.active)]
        return np.einsum("mk,mk->k", np.conj(p), a @ p).real

    def addition_batch(self, state, p_old, beta, a_glob):
        a = self.a[np.ix_(state.active, state.active)]
        base = np.einsum("mk,mk->k", np.conj(p_old), a @ p_old).real
        rows = self.a[np.ix_(a_glob, state.active)]
        cross = np.einsum("km,mk->k", rows, p_old)
        return (
            base
            + 2 * (np.conj(beta) * cross).real
            + np.abs(beta) ** 2 * self.a[a_glob, a_glob]
        )


class ConstantObjective:
    def value(self, i, active):
        return 7.0

    def removal_batch(self, state, p, r_loc):
        return np.full(p.shape[1], 7.0)

    def addition_batch(self, state, p_old, beta, a_glob):
        return np.full(p_old.shape[1], 7.0)


# -- init_state ---------------------------------------------------------------

def test_single_dof_state_is_scalar_inverse():
    rng = np.random.default_rng(0)
    sysm = random_system(5, rng)
    st = init_state(sysm, [2])
    assert st.y[0, 0] == pytest.approx(1.0 / sysm.z[2, 2])
    assert st.i[0] == pytest.approx(sysm.v[2] / sysm.z[2, 2])


def test_full_state_matches_direct_solve():
    rng = np.random.default_rng(1)
    sysm = random_system(6, rng)
    st = init_state(sysm, range(6))
    direct = np.linalg.solve(sysm.z, sysm.v)
    assert np.linalg.norm(st.i - direct) <= 1e-12 * np.linalg.norm(direct)


def test_singular_truncation_reports_condition():
    z = np.zeros((3, 3), dtype=complex)
    z[2, 2] = 1.0
    sysm = DenseSystem(z, np.ones(3, dtype=complex))
    with pytest.raises(SingularTruncationError):
        init_state(sysm, [0, 1])


def test_index_map_is_bijection():
    rng = np.random.default_rng(2)
    sysm = random_system(9, rng)
    st = init_state(sysm, [1, 4, 7])
    assert np.array_equal(st.index_map[[1, 4, 7]], [0, 1, 2])
    assert np.count_nonzero(st.index_map >= 0) == 3


# -- single perturbations -------------------------------------------------------

def test_remove_zero_current_dof_leaves_currents_unchanged():
    rng = np.random.default_rng(3)
    n = 6
    sysm = random_system(n, rng)
    st = init_state(sysm, range(n))
    # craft an excitation making DOF 2's current exactly zero
    v2 = sysm.v.copy()
    i_mod = st.i.copy()
    i_mod[2] = 0.0
    v2 = sysm.z @ i_mod
    sys2 = DenseSystem(sysm.z, v2)
    st2 = init_state(sys2, range(n))
    p = remove_current(st2, 2)
    assert np.allclose(p, np.delete(st2.i, 2), atol=1e-12 * np.abs(st2.i).max())


def test_remove_current_matches_direct_solve():
    rng = np.random.default_rng(4)
    sysm = random_system(8, rng)
    st = init_state(sysm, range(8))
    for r in range(8):
        p = remove_current(st, r)
        rest = np.setdiff1d(np.arange(8), [r])
        direct = np.linalg.solve(sysm.z[np.ix_(rest, rest)], sysm.v[rest])
        assert np.linalg.norm(p - direct) <= 1e-10 * np.linalg.norm(direct)
        assert len(p) == 7  # truncated: no entry for r


def test_add_current_matches_direct_solve():
    rng = np.random.default_rng(5)
    sysm = random_system(8, rng)
    active = [0, 2, 3, 5, 7]
    st = init_state(sysm, active)
    for a in (1, 4, 6):
        p = add_current(st, a, sysm)
        new = np.sort(np.append(active, a))
        direct = np.linalg.solve(sysm.z[np.ix_(new, new)], sysm.v[new])
        assert np.linalg.norm(p - direct) <= 1e-10 * np.linalg.norm(direct)


def test_decoupled_addition_preserves_currents():
    rng = np.random.default_rng(6)
    n = 6
    sysm = random_system(n, rng)
    z = sysm.z.copy()
    z[:, 4] = 0
    z[4, :] = 0
    z[4, 4] = 2.0 - 1.0j
    v = sysm.v.copy()
    v[4] = 0.0
    sys2 = DenseSystem(z, v)
    active = [0, 1, 2, 3, 5]
    st = init_state(sys2, active)
    p = add_current(st, 4, sys2)
    assert p[4] == 0
    assert np.allclose(np.delete(p, 4), st.i, atol=1e-13 * np.abs(st.i).max())


def test_remove_add_roundtrip():
    rng = np.random.default_rng(7)
    sysm = random_system(10, rng)
    st = init_state(sysm, range(10))
    st2 = commit_remove(st, 4, sysm)
    st3 = commit_add(st2, 4, sysm)
    assert np.linalg.norm(st3.i - st.i) <= 1e-9 * np.linalg.norm(st.i)


def test_degenerate_pivot_raises():
    # y_rr ~ 0 happens when the remaining block is near-singular; force it
    z = np.array(
        [[1.0, 0.0, 0.0],
         [0.0, 1.0, 1.0],
         [0.0, 1.0, 1.0 + 1e-16]],
        dtype=complex,
    )
    sysm = DenseSystem(z, np.ones(3, dtype=complex))
    with pytest.raises((DegeneratePivotError, SingularTruncationError)):
        st = init_state(sysm, range(3))
        remove_current(st, 0)


# -- commits ---------------------------------------------------------------------

def test_commit_remove_matches_from_scratch():
    rng = np.random.default_rng(8)
    sysm = random_system(9, rng)
    st = init_state(sysm, range(9))
    st2 = commit_remove(st, 3, sysm)
    ref = init_state(sysm, np.setdiff1d(np.arange(9), [3]))
    assert np.linalg.norm(st2.y - ref.y) <= 1e-8 * np.linalg.norm(ref.y)


def test_commit_add_decoupled_dof_diagonal():
    rng = np.random.default_rng(9)
    n = 5
    sysm = random_system(n, rng)
    z = sysm.z.copy()
    z[:, 2] = 0
    z[2, :] = 0
    z[2, 2] = 4.0 + 2.0j
    sys2 = DenseSystem(z, sysm.v)
    st = init_state(sys2, [0, 1, 3, 4])
    st2 = commit_add(st, 2, sys2)
    assert st2.y[2, 2] == pytest.approx(1.0 / (4.0 + 2.0j))
    assert np.allclose(np.delete(np.delete(st2.y, 2, 0), 2, 1), st.y)


def test_commit_matches_returned_perturbation():
    rng = np.random.default_rng(10)
    sysm = random_system(12, rng)
    st = init_state(sysm, range(12))
    p = remove_current(st, 5)
    st2 = commit_remove(st, 5, sysm)
    assert np.allclose(st2.i, p, rtol=0, atol=1e-12 * np.abs(p).max())
    a_cur = add_current(st2, 5, sysm)
    st3 = commit_add(st2, 5, sysm)
    assert np.allclose(st3.i, a_cur, rtol=0, atol=1e-12 * np.abs(a_cur).max())


def test_thirty_random_alternating_commits_keep_consistency():
    rng = np.random.default_rng(11)
    n = 24
    sysm = random_system(n, rng)
    st = init_state(sysm, range(n))
    gene = Gene.ones(n)
    for step in range(30):
        sets = derive_sets(gene)
        if (step % 2 == 0 and len(sets.r) > 4) or not len(sets.a):
            d = int(rng.choice(sets.r))
            st = commit_remove(st, d, sysm)
        else:
            d = int(rng.choice(sets.a))
            st = commit_add(st, d, sysm)
        gene = gene.flip(d)
    assert rebuild_residual(st, sysm) <= 1e-7


def test_hundred_step_drift_bound():
    rng = np.random.default_rng(12)
    n = 40
    sysm = random_system(n, rng)
    st = init_state(sysm, range(n))
    gene = Gene.ones(n)
    for step in range(100):
        sets = derive_sets(gene)
        remove = len(sets.r) > n // 2 or not len(sets.a)
        pool = sets.r if remove else sets.a
        d = int(rng.choice(pool))
        st = (commit_remove if remove else commit_add)(st, d, sysm)
        gene = gene.flip(d)
    assert rebuild_residual(st, sysm) <= 1e-7


# -- sweeps -----------------------------------------------------------------------

def test_constant_objective_all_tau_zero():
    rng = np.random.default_rng(13)
    sysm = random_system(10, rng)
    gene = Gene(10, (0,), 0b101101101)
    st = init_state(sysm, gene.active_dofs())
    smap = sweep_sensitivity(st, sysm, ConstantObjective(), derive_sets(gene))
    assert np.all(smap.tau == 0)
    assert smap.best() is None


def test_sweep_matches_exhaustive_direct_solves():
    rng = np.random.default_rng(14)
    n = 10
    sysm = random_system(n, rng)
    a_full = rng.standard_normal((n, n))
    a_full = 0.5 * (a_full + a_full.T)
    obj = QuadObjective(a_full)
    gene = Gene(n, (2,), 0b101100110)
    st = init_state(sysm, gene.active_dofs())
    sets = derive_sets(gene)
    smap = sweep_sensitivity(st, sysm, obj, sets)
    f0 = obj.value(st.i, st.active)
    for dof, act, tau in zip(smap.dof, smap.action, smap.tau):
        if act == REMOVE:
            new = np.setdiff1d(st.active, [dof])
        else:
            new = np.sort(np.append(st.active, dof))
        direct = np.linalg.solve(sysm.z[np.ix_(new, new)], sysm.v[new])
        f_direct = float(
            (np.conj(direct) @ (a_full[np.ix_(new, new)] @ direct)).real
        )
        assert tau == pytest.approx(f_direct - f0, abs=1e-9 * max(1, abs(f_direct)))


def test_sweep_candidate_bookkeeping():
    rng = np.random.default_rng(15)
    sysm = random_system(8, rng)
    gene = Gene(8, (1,), 0b0110011)
    st = init_state(sysm, gene.active_dofs())
    sets = derive_sets(gene)
    smap = sweep_sensitivity(st, sysm, ConstantObjective(), derive_sets(gene))
    assert len(smap.dof) == len(sets.r) + len(sets.a)
    assert np.array_equal(np.sort(smap.dof[smap.action == REMOVE]), sets.r)
    assert np.array_equal(np.sort(smap.dof[smap.action == ADD]), sets.a)


def test_sweep_respects_disable_flags():
    rng = np.random.default_rng(16)
    sysm = random_system(8, rng)
    gene = Gene(8, (), 0b00110011)
    st = init_state(sysm, gene.active_dofs())
    sets = derive_sets(gene)
    only_r = sweep_sensitivity(st, sysm, ConstantObjective(), sets, additions=False)
    assert np.all(only_r.action == REMOVE)
    only_a = sweep_sensitivity(st, sysm, ConstantObjective(), sets, removals=False)
    assert np.all(only_a.action == ADD)


def test_composite_objective_sweep_exact(toy_plate):
    ops, _, gap = toy_plate
    spec = ObjectiveSpec.q_factor(1.0, 1.0)
    obj = CompositeObjective(ops, spec)
    system = DenseSystem(ops.z_total(), ops.v)
    gene = Gene(ops.n_dof, (gap,), 0b110101011011)
    st = init_state(system, gene.active_dofs())
    smap = sweep_sensitivity(st, system, obj, derive_sets(gene))
    f0 = obj.value(st.i, st.active)
    for dof, act, tau in zip(smap.dof, smap.action, smap.tau):
        if act == REMOVE:
            new = np.setdiff1d(st.active, [dof])
        else:
            new = np.sort(np.append(st.active, dof))
        direct = np.linalg.solve(system.z[np.ix_(new, new)], system.v[new])
        f_direct = obj.value(direct, new)
        assert tau == pytest.approx(f_direct - f0, rel=1e-9, abs=1e-9)


# -- operator truncation -----------------------------------------------------------

def test_truncate_identity_map():
    rng = np.random.default_rng(17)
    a = rng.standard_normal((6, 6))
    assert np.array_equal(truncate_operator(a, np.arange(6)), a)


def test_truncate_matches_explicit_product():
    rng = np.random.default_rng(18)
    a = rng.standard_normal((6, 6))
    idx = np.array([0, 2, 5])
    c = np.zeros((6, 3))
    c[idx, np.arange(3)] = 1.0
    assert np.allclose(truncate_operator(a, idx), c.T @ a @ c)


def test_truncate_boolean_mask_zeroes_complement():
    rng = np.random.default_rng(19)
    a = rng.standard_normal((6, 6))
    mask = np.array([True, True, True, False, False, False])
    out = truncate_operator(a, mask)
    assert np.array_equal(out[:3, :3], a[:3, :3])
    assert np.all(out[3:, :] == 0) and np.all(out[:, 3:] == 0)
