"""Physical observables, port quantities and composite scalar objectives.

Quadratic forms follow the power convention: with all operators in ohms and
currents in amperes, (1/2) I^H A I is in watts.  Energies in joules divide
the corresponding power form by the angular frequency.  All Q-like metrics
are homogeneous of degree zero in the current.

The CompositeObjective mirrors the spec of one optimization run: a weighted
sum of metric terms, an optional evaluation sub-domain, and batch entry
points so a sensitivity sweep can price whole candidate families at once.
Ratio denominators are guarded: values below 1e-300 raise instead of
returning infinities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import ETA0
from .operators import OperatorSet

__all__ = [
    "MetricError",
    "NonRadiatingCurrentError",
    "OpenPortError",
    "ObjectiveTerm",
    "ObjectiveSpec",
    "quadratic_form",
    "radiated_power",
    "lost_power",
    "complex_power",
    "q_untuned",
    "q_matching",
    "port_current",
    "input_impedance",
    "subregion_operator",
    "coupling_operator",
    "CompositeObjective",
    "composite",
]

_DEN_FLOOR = 1e-300


class MetricError(ValueError):
    pass


class NonRadiatingCurrentError(MetricError):
    pass


class OpenPortError(MetricError):
    pass


def _form(a: np.ndarray, i: np.ndarray) -> complex:
    if a.shape != (len(i), len(i)):
        raise MetricError(
            f"operator {a.shape} does not match current of length {len(i)}"
        )
    return complex(np.conj(i) @ (a @ i))


def quadratic_form(a: np.ndarray, i: np.ndarray):
    """Power form (1/2) I^H A I; real up to roundoff for symmetric real A."""
    val = 0.5 * _form(a, i)
    if np.isrealobj(a):
        return val.real
    return val


def complex_power(i: np.ndarray, v: np.ndarray) -> complex:
    """(1/2) I^H V; its real part balances radiated plus lost power."""
    return 0.5 * complex(np.conj(i) @ v)


def radiated_power(i: np.ndarray, r0=None, u1=None) -> float:
    """(1/2) I^H R0 I, or the linear form (1/2)|U1 I|^2 when U1 is given."""
    if u1 is not None:
        return 0.5 * float(np.linalg.norm(u1 @ i) ** 2)
    return quadratic_form(r0, i)


def lost_power(i: np.ndarray, r_loss: np.ndarray) -> float:
    """(1/2) I^H (Rrho + Re{ZL}) I, lumped-port dissipation included."""
    return quadratic_form(r_loss, i)


def q_untuned(i: np.ndarray, w: np.ndarray, r0: np.ndarray) -> float:
    """Stored-energy Q: (1/2) I^H W I / I^H R0 I."""
    den = _form(r0, i).real
    if den < _DEN_FLOOR:
        raise NonRadiatingCurrentError("current radiates no power")
    return 0.5 * _form(w, i).real / den


def q_matching(i: np.ndarray, x: np.ndarray, r0: np.ndarray) -> float:
    """Self-resonance penalty: |I^H X I| / I^H R0 I."""
    den = _form(r0, i).real
    if den < _DEN_FLOOR:
        raise NonRadiatingCurrentError("current radiates no power")
    return abs(_form(x, i).real) / den


def port_current(i: np.ndarray, n: int, active=None) -> complex:
    """Current through port DOF n; ``active`` maps a truncated current."""
    if active is not None:
        loc = np.flatnonzero(np.asarray(active) == n)
        if not len(loc):
            raise OpenPortError(f"port DOF {n} is not active")
        return complex(i[loc[0]])
    return complex(i[n])


def input_impedance(i: np.ndarray, z: np.ndarray, n: int, active=None) -> complex:
    """Port impedance I^H D_n^T (Z I) / |D_n I|^2 = V_n / I_n at a solution."""
    if active is not None:
        loc = np.flatnonzero(np.asarray(active) == n)
        if not len(loc):
            raise OpenPortError(f"port DOF {n} is not active")
        n = int(loc[0])
    i_n = i[n]
    if abs(i_n) ** 2 < _DEN_FLOOR:
        raise OpenPortError(f"port DOF {n} carries no current")
    return complex(np.conj(i_n) * (z[n] @ i) / abs(i_n) ** 2)


def subregion_operator(a: np.ndarray, d) -> np.ndarray:
    """Zero the operator outside the block of DOFs in d (built once)."""
    idx = np.unique(np.asarray(list(d), dtype=np.int64))
    out = np.zeros_like(a)
    if len(idx):
        out[np.ix_(idx, idx)] = a[np.ix_(idx, idx)]
    return out


def coupling_operator(a: np.ndarray, d1, d2) -> np.ndarray:
    """Mutual block D1^T A D2 between two disjoint regions."""
    i1 = np.unique(np.asarray(list(d1), dtype=np.int64))
    i2 = np.unique(np.asarray(list(d2), dtype=np.int64))
    if len(np.intersect1d(i1, i2)):
        raise MetricError("coupling regions must be disjoint")
    out = np.zeros_like(a)
    if len(i1) and len(i2):
        out[np.ix_(i1, i2)] = a[np.ix_(i1, i2)]
    return out


@dataclass(frozen=True)
class ObjectiveTerm:
    """One weighted metric term of a composite objective."""

    kind: str
    weight: float
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Composite objective: weighted terms, evaluation domain, normalization."""

    terms: tuple[ObjectiveTerm, ...]
    eval_domain: tuple[int, ...] | None = None
    q_lb: float | None = None

    def __post_init__(self) -> None:
        ws = [t.weight for t in self.terms]
        if not ws or not any(w != 0 for w in ws):
            raise MetricError("objective needs at least one nonzero weight")
        if not all(np.isfinite(ws)):
            raise MetricError("weights must be finite")

    @classmethod
    def q_factor(cls, w1: float = 1.0, w2: float = 1.0, q_lb=None) -> "ObjectiveSpec":
        """The canonical composite w1*Q_untuned + w2*Q_matching."""
        return cls(
            (
                ObjectiveTerm("q_untuned", w1),
                ObjectiveTerm("q_matching", w2),
            ),
            q_lb=q_lb,
        )


_QUAD_KINDS = {
    "q_untuned": ("w", "r0"),
    "q_matching": ("x", "r0"),
    "radiated_power": ("r0",),
    "lost_power": ("rl",),
}


class CompositeObjective:
    """Evaluates a composite objective on currents and candidate batches.

    Exposes ``value`` for one current plus ``removal_batch``/``addition_batch``
    used by the sensitivity sweep.  Batch values are algebraically identical
    to evaluating each perturbed current by hand; removal columns carry a
    zero at the dropped row, additions are priced through border terms.
    """

    def __init__(self, ops: OperatorSet, spec: ObjectiveSpec):
        self.spec = spec
        self.ops = ops
        mask = None
        if spec.eval_domain is not None:
            mask = np.unique(np.asarray(spec.eval_domain, dtype=np.int64))
        self._mask = mask

        def masked(a):
            return a if mask is None else subregion_operator(a, mask)

        quads: dict[str, np.ndarray] = {}
        rows: dict[int, np.ndarray] = {}
        for term in spec.terms:
            if term.kind in _QUAD_KINDS:
                for key in _QUAD_KINDS[term.kind]:
                    if key not in quads:
                        quads[key] = masked(
                            {
                                "w": ops.w,
                                "x": ops.x_total,
                                "r0": ops.r0,
                                "rl": ops.r_loss,
                            }[key]
                        )
            elif term.kind == "radiation_intensity":
                ridx = int(term.params.get("row", 0))
                rows[ridx] = (
                    ops.f_rows[ridx]
                    if mask is None
                    else np.where(np.isin(np.arange(ops.n_dof), mask),
                                  ops.f_rows[ridx], 0)
                )
            elif term.kind == "input_impedance_target":
                pass
            elif term.kind == "custom_quadratic":
                quads[f"user{id(term)}"] = masked(
                    np.asarray(term.params["matrix"])
                )
            else:
                raise MetricError(f"unknown objective term kind {term.kind!r}")
        self._quads = quads
        self._rows = rows
        self._term_quad_key = {
            id(t): f"user{id(t)}" for t in spec.terms if t.kind == "custom_quadratic"
        }

    # -- raw ingredients ---------------------------------------------------

    def _forms_single(self, i, active):
        act = np.asarray(active, dtype=np.int64)
        out = {}
        for key, a in self._quads.items():
            a_t = a[np.ix_(act, act)]
            out[key] = float((np.conj(i) @ (a_t @ i)).real)
        return out

    def _combine(self, forms, ports, rowvals) -> float:
        total = 0.0
        for term in self.spec.terms:
            k = term.kind
            if k == "q_untuned":
                den = forms["r0"]
                if den < _DEN_FLOOR:
                    raise NonRadiatingCurrentError("current radiates no power")
                val = 0.5 * forms["w"] / den
            elif k == "q_matching":
                den = forms["r0"]
                if den < _DEN_FLOOR:
                    raise NonRadiatingCurrentError("current radiates no power")
                val = abs(forms["x"]) / den
            elif k == "radiated_power":
                val = 0.5 * forms["r0"]
            elif k == "lost_power":
                val = 0.5 * forms["rl"]
            elif k == "radiation_intensity":
                val = rowvals[int(term.params.get("row", 0))] / (2 * ETA0)
            elif k == "input_impedance_target":
                z_in = ports[int(term.params["dof"])]
                val = abs(z_in - complex(term.params.get("target", 0))) ** 2
            else:
                val = 0.5 * forms[self._term_quad_key[id(term)]]
            total += term.weight * val
        return total

    def _port_dofs(self):
        return [
            int(t.params["dof"])
            for t in self.spec.terms
            if t.kind == "input_impedance_target"
        ]

    # -- protocol used by the sweep ----------------------------------------

    def value(self, i: np.ndarray, active) -> float:
        forms = self._forms_single(i, active)
        act = np.asarray(active, dtype=np.int64)
        ports = {}
        for n in self._port_dofs():
            loc = np.flatnonzero(act == n)
            if not len(loc) or abs(i[loc[0]]) ** 2 < _DEN_FLOOR:
                raise OpenPortError(f"port DOF {n} carries no current")
            # at a solution of the truncated system, (Z I)_port = V_port
            ports[n] = complex(
                np.conj(i[loc[0]]) * self.ops.v[n] / abs(i[loc[0]]) ** 2
            )
        rowvals = {
            ridx: float(np.abs(row[act] @ i) ** 2)
            for ridx, row in self._rows.items()
        }
        return self._combine(forms, ports, rowvals)

    def removal_batch(self, state, p: np.ndarray, r_loc: np.ndarray) -> np.ndarray:
        act = state.active
        n_c = p.shape[1]
        forms = {}
        for key, a in self._quads.items():
            a_t = a[np.ix_(act, act)]
            forms[key] = np.einsum("mk,mk->k", np.conj(p), a_t @ p).real
        ports = {}
        for n in self._port_dofs():
            loc = np.flatnonzero(act == n)
            if not len(loc):
                raise OpenPortError(f"port DOF {n} is not active")
            cur = p[loc[0], :]
            ports[n] = np.where(
                np.abs(cur) ** 2 < _DEN_FLOOR, np.nan,
                np.conj(cur) * self.ops.v[n] / np.abs(cur) ** 2,
            )
        rowvals = {
            ridx: np.abs(row[act] @ p) ** 2 for ridx, row in self._rows.items()
        }
        return self._combine_batch(n_c, forms, ports, rowvals)

    def addition_batch(
        self, state, p_old: np.ndarray, beta: np.ndarray, a_glob: np.ndarray
    ) -> np.ndarray:
        act = state.active
        n_c = p_old.shape[1]
        forms = {}
        for key, a in self._quads.items():
            a_t = a[np.ix_(act, act)]
            base = np.einsum("mk,mk->k", np.conj(p_old), a_t @ p_old).real
            rows_a = a[np.ix_(a_glob, act)]
            cross = np.einsum("km,mk->k", rows_a, p_old)
            diag_a = a[a_glob, a_glob]
            forms[key] = (
                base
                + 2 * (np.conj(beta) * cross).real
                + np.abs(beta) ** 2 * diag_a.real
            )
        ports = {}
        for n in self._port_dofs():
            loc = np.flatnonzero(act == n)
            if not len(loc):
                raise OpenPortError(f"port DOF {n} is not active")
            cur = p_old[loc[0], :]
            ports[n] = np.where(
                np.abs(cur) ** 2 < _DEN_FLOOR, np.nan,
                np.conj(cur) * self.ops.v[n] / np.abs(cur) ** 2,
            )
        rowvals = {}
        for ridx, row in self._rows.items():
            rowvals[ridx] = np.abs(row[act] @ p_old + row[a_glob] * beta) ** 2
        return self._combine_batch(n_c, forms, ports, rowvals)

    def _combine_batch(self, n_c, forms, ports, rowvals) -> np.ndarray:
        total = np.zeros(n_c)
        for term in self.spec.terms:
            k = term.kind
            if k == "q_untuned":
                val = 0.5 * forms["w"] / np.maximum(forms["r0"], _DEN_FLOOR)
                val = np.where(forms["r0"] < _DEN_FLOOR, np.inf, val)
            elif k == "q_matching":
                val = np.abs(forms["x"]) / np.maximum(forms["r0"], _DEN_FLOOR)
                val = np.where(forms["r0"] < _DEN_FLOOR, np.inf, val)
            elif k == "radiated_power":
                val = 0.5 * forms["r0"]
            elif k == "lost_power":
                val = 0.5 * forms["rl"]
            elif k == "radiation_intensity":
                val = rowvals[int(term.params.get("row", 0))] / (2 * ETA0)
            elif k == "input_impedance_target":
                z_in = ports[int(term.params["dof"])]
                val = np.abs(z_in - complex(term.params.get("target", 0))) ** 2
            else:
                val = 0.5 * forms[self._term_quad_key[id(term)]]
            total = total + term.weight * val
        return total


def composite(spec: ObjectiveSpec, i: np.ndarray, ops: OperatorSet, active=None) -> float:
    """One-shot composite evaluation; normalized by spec.q_lb when set."""
    if active is None:
        active = np.arange(ops.n_dof)
    value = CompositeObjective(ops, spec).value(np.asarray(i), active)
    if spec.q_lb is not None:
        if spec.q_lb <= 0:
            raise MetricError("normalization bound must be positive")
        return value / spec.q_lb
    return value
