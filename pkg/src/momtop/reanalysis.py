"""Inversion-free evaluation of all smallest shape perturbations.

One direct factorization per shape; afterwards every DOF removal is a
symmetric rank-1 downdate of the admittance matrix and every addition a
bordered expansion through a scalar Schur complement.  A full sensitivity
sweep therefore prices every Hamming-distance-1 neighbor of the current
shape at the cost of vector work per candidate.

Matrices here are complex symmetric (unconjugated transpose identities),
so the auxiliary products use plain transposes, never Hermitian ones.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .shapes import DofSets

__all__ = [
    "DenseSystem",
    "ReanalysisState",
    "SensitivityMap",
    "ReanalysisError",
    "SingularTruncationError",
    "DegeneratePivotError",
    "REMOVE",
    "ADD",
    "init_state",
    "remove_current",
    "add_current",
    "commit_remove",
    "commit_add",
    "sweep_sensitivity",
    "truncate_operator",
    "rebuild_residual",
]

REMOVE = 0
ADD = 1

_PIVOT_RTOL = 1e-14
_INIT_RESID_TOL = 1e-8
_DRIFT_LIMIT = 1e-7
_EPS = float(np.finfo(float).eps)


class ReanalysisError(RuntimeError):
    pass


class SingularTruncationError(ReanalysisError):
    """Truncated impedance matrix is numerically singular."""

    def __init__(self, message: str, cond: float):
        super().__init__(f"{message} (condition estimate {cond:.3e})")
        self.cond = cond


class DegeneratePivotError(ReanalysisError):
    """A rank-1 pivot is too small for a stable update."""


@dataclass(frozen=True)
class DenseSystem:
    """Original full-grid impedance matrix and excitation vector."""

    z: np.ndarray
    v: np.ndarray

    @property
    def n_dof(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True)
class ReanalysisState:
    """Admittance, excitation and solution over the active DOF set."""

    active: np.ndarray     # sorted global DOF indices, shape (M,)
    y: np.ndarray          # (M, M) inverse of the truncated impedance matrix
    v: np.ndarray          # (M,)
    i: np.ndarray          # (M,) solution current y @ v
    index_map: np.ndarray  # (n_dof,) global -> local, -1 where inactive
    drift: float = 0.0     # accumulated relative-correction proxy

    @property
    def size(self) -> int:
        return len(self.active)


def _make_index_map(n_dof: int, active: np.ndarray) -> np.ndarray:
    m = np.full(n_dof, -1, dtype=np.int64)
    m[active] = np.arange(len(active))
    return m


def init_state(system: DenseSystem, active) -> ReanalysisState:
    """Direct factorization of the truncated system; the only cubic step."""
    active = np.asarray(sorted(int(a) for a in active), dtype=np.int64)
    if len(active) == 0:
        raise ValueError("active set is empty")
    z_t = system.z[np.ix_(active, active)]
    v_t = system.v[active]
    try:
        y = np.linalg.inv(z_t)
    except np.linalg.LinAlgError:
        raise SingularTruncationError(
            "truncated impedance matrix is singular", np.inf
        ) from None
    resid = np.linalg.norm(y @ z_t - np.eye(len(active))) / np.sqrt(len(active))
    if resid > _INIT_RESID_TOL:
        raise SingularTruncationError(
            f"factorization residual {resid:.3e} exceeds {_INIT_RESID_TOL:g}",
            float(np.linalg.cond(z_t)),
        )
    return ReanalysisState(
        active=active,
        y=y,
        v=v_t,
        i=y @ v_t,
        index_map=_make_index_map(system.n_dof, active),
        drift=resid,
    )


def _local(state: ReanalysisState, dof: int) -> int:
    loc = int(state.index_map[dof])
    if loc < 0:
        raise ValueError(f"DOF {dof} is not active")
    return loc


def remove_current(state: ReanalysisState, r: int) -> np.ndarray:
    """Current after removing DOF r, ordered over active \\ {r}."""
    loc = _local(state, r)
    gamma = state.y[loc, loc]
    if abs(gamma) < _PIVOT_RTOL * np.abs(state.y).max():
        raise DegeneratePivotError(f"admittance pivot for DOF {r} is degenerate")
    p = state.i - (state.i[loc] / gamma) * state.y[:, loc]
    return np.delete(p, loc)


def _addition_pieces(state: ReanalysisState, a_glob: np.ndarray, system: DenseSystem):
    """Auxiliary columns x_a and Schur complements z_a for candidate DOFs."""
    zg = system.z[np.ix_(state.active, a_glob)]      # (M, K)
    x = state.y @ zg
    za = system.z[a_glob, a_glob] - np.einsum("mk,mk->k", zg, x)
    beta = (system.v[a_glob] - zg.T @ state.i) / za
    return zg, x, za, beta


def add_current(state: ReanalysisState, a: int, system: DenseSystem) -> np.ndarray:
    """Current after adding DOF a, with sorted insertion of the new entry."""
    if state.index_map[a] >= 0:
        raise ValueError(f"DOF {a} is already active")
    a_arr = np.array([a], dtype=np.int64)
    _, x, za, beta = _addition_pieces(state, a_arr, system)
    if abs(za[0]) < _PIVOT_RTOL * max(abs(system.z[a, a]), 1e-300):
        raise DegeneratePivotError(f"Schur complement for DOF {a} is degenerate")
    p_old = state.i - beta[0] * x[:, 0]
    pos = int(np.searchsorted(state.active, a))
    return np.insert(p_old, pos, beta[0])


def _maybe_refactor(
    new: ReanalysisState, system: DenseSystem | None
) -> ReanalysisState:
    if system is None or new.drift <= _DRIFT_LIMIT:
        return new
    return init_state(system, new.active)


def commit_remove(
    state: ReanalysisState, r: int, system: DenseSystem | None = None
) -> ReanalysisState:
    """Rank-1 downdate of Y and truncation of V; returns the new state."""
    loc = _local(state, r)
    gamma = state.y[loc, loc]
    if abs(gamma) < _PIVOT_RTOL * np.abs(state.y).max():
        raise DegeneratePivotError(f"admittance pivot for DOF {r} is degenerate")
    y_col = state.y[:, loc]
    y_new = state.y - np.outer(y_col, y_col) / gamma
    y_new = np.delete(np.delete(y_new, loc, axis=0), loc, axis=1)
    v_new = np.delete(state.v, loc)
    active = np.delete(state.active, loc)
    if len(active) == 0:
        raise ValueError("cannot remove the last active DOF")
    corr = float(np.linalg.norm(y_col) ** 2 / abs(gamma))
    drift = state.drift + 4 * _EPS * corr / max(np.linalg.norm(y_new), 1e-300)
    new = ReanalysisState(
        active=active,
        y=y_new,
        v=v_new,
        i=y_new @ v_new,
        index_map=_make_index_map(len(state.index_map), active),
        drift=drift,
    )
    return _maybe_refactor(new, system)


def commit_add(
    state: ReanalysisState, a: int, system: DenseSystem
) -> ReanalysisState:
    """Bordered expansion of Y scaled by the Schur complement 1/z_a."""
    if state.index_map[a] >= 0:
        raise ValueError(f"DOF {a} is already active")
    a_arr = np.array([a], dtype=np.int64)
    _, x, za_v, _ = _addition_pieces(state, a_arr, system)
    za = za_v[0]
    if abs(za) < _PIVOT_RTOL * max(abs(system.z[a, a]), 1e-300):
        raise DegeneratePivotError(f"Schur complement for DOF {a} is degenerate")
    x = x[:, 0]
    pos = int(np.searchsorted(state.active, a))
    y_new = state.y + np.outer(x, x) / za
    y_new = np.insert(y_new, pos, -x / za, axis=1)
    y_new = np.insert(y_new, pos, np.insert(-x / za, pos, 1.0 / za), axis=0)
    v_new = np.insert(state.v, pos, system.v[a])
    active = np.insert(state.active, pos, a)
    nx = float(np.linalg.norm(x))
    corr = (nx * nx + 2 * nx + 1) / abs(za)
    drift = state.drift + 4 * _EPS * corr / max(np.linalg.norm(y_new), 1e-300)
    new = ReanalysisState(
        active=active,
        y=y_new,
        v=v_new,
        i=y_new @ v_new,
        index_map=_make_index_map(len(state.index_map), active),
        drift=drift,
    )
    return _maybe_refactor(new, system)


@dataclass(frozen=True)
class SensitivityMap:
    """Objective change for every smallest perturbation of one shape."""

    dof: np.ndarray         # global DOF per candidate
    action: np.ndarray      # REMOVE or ADD
    tau: np.ndarray         # f(perturbed) - f(current); NaN where excluded
    excluded: np.ndarray    # degenerate-pivot candidates
    objective_value: float  # f of the unperturbed shape

    def best(self) -> tuple[int, int, float] | None:
        """Most negative usable candidate; ties break to the lowest DOF,
        removals before additions.  None when no candidate improves."""
        ok = ~self.excluded & np.isfinite(self.tau) & (self.tau < 0)
        if not ok.any():
            return None
        idx = np.flatnonzero(ok)
        order = np.lexsort((self.action[idx], self.dof[idx], self.tau[idx]))
        b = idx[order[0]]
        return int(self.dof[b]), int(self.action[b]), float(self.tau[b])


def sweep_sensitivity(
    state: ReanalysisState,
    system: DenseSystem,
    objective,
    sets: DofSets,
    removals: bool = True,
    additions: bool = True,
) -> SensitivityMap:
    """Evaluate the objective for every candidate in R and A, vectorized.

    ``objective`` provides value/removal_batch/addition_batch; degenerate
    pivots are excluded and flagged rather than raised.
    """
    f0 = float(objective.value(state.i, state.active))
    dofs, actions, taus, excl = [], [], [], []

    if removals and len(sets.r):
        r_glob = sets.r
        r_loc = state.index_map[r_glob]
        if np.any(r_loc < 0):
            raise ValueError("removal candidate is not active")
        ydiag = state.y[r_loc, r_loc]
        bad = np.abs(ydiag) < _PIVOT_RTOL * np.abs(state.y).max()
        beta = np.where(bad, 1.0, state.i[r_loc] / np.where(bad, 1.0, ydiag))
        p = state.i[:, None] - state.y[:, r_loc] * beta[None, :]
        p[r_loc, np.arange(len(r_loc))] = 0.0
        f = np.asarray(objective.removal_batch(state, p, r_loc), dtype=float)
        tau = f - f0
        tau[bad] = np.nan
        dofs.append(r_glob)
        actions.append(np.full(len(r_glob), REMOVE, dtype=np.int8))
        taus.append(tau)
        excl.append(bad)

    if additions and len(sets.a):
        a_glob = sets.a
        _, x, za, beta = _addition_pieces(state, a_glob, system)
        ref = np.maximum(np.abs(system.z[a_glob, a_glob]), 1e-300)
        bad = np.abs(za) < _PIVOT_RTOL * ref
        beta = np.where(bad, 0.0, beta)
        p_old = state.i[:, None] - x * beta[None, :]
        f = np.asarray(
            objective.addition_batch(state, p_old, beta, a_glob), dtype=float
        )
        tau = f - f0
        tau[bad] = np.nan
        dofs.append(a_glob)
        actions.append(np.full(len(a_glob), ADD, dtype=np.int8))
        taus.append(tau)
        excl.append(bad)

    if dofs:
        return SensitivityMap(
            dof=np.concatenate(dofs),
            action=np.concatenate(actions),
            tau=np.concatenate(taus),
            excluded=np.concatenate(excl),
            objective_value=f0,
        )
    empty_i = np.array([], dtype=np.int64)
    return SensitivityMap(
        dof=empty_i,
        action=np.array([], dtype=np.int8),
        tau=np.array([]),
        excluded=np.array([], dtype=bool),
        objective_value=f0,
    )


def truncate_operator(a: np.ndarray, selector) -> np.ndarray:
    """Sub-operator by direct indexing: gather for index lists, block
    zeroing for boolean evaluation-domain masks."""
    sel = np.asarray(selector)
    if sel.dtype == bool:
        idx = np.flatnonzero(sel)
        out = np.zeros_like(a)
        out[np.ix_(idx, idx)] = a[np.ix_(idx, idx)]
        return out
    idx = sel.astype(np.int64)
    return a[np.ix_(idx, idx)]


def rebuild_residual(state: ReanalysisState, system: DenseSystem) -> float:
    """Relative deviation of the tracked Y from a from-scratch inverse."""
    z_t = system.z[np.ix_(state.active, state.active)]
    m = len(state.active)
    return float(
        np.linalg.norm(state.y @ z_t - np.eye(m)) / np.sqrt(m)
    )
