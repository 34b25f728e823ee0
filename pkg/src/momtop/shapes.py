"""Binary shape words and the DOF set algebra driving the local search.

A gene assigns one bit to every optimizable DOF (material present or not);
fixed DOFs (the feed, user-pinned structure) sit outside the word and are
always active.  Genes are immutable value types: bits live in one packed
Python integer, so copies are cheap and equality is content equality.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Gene",
    "DofSets",
    "derive_sets",
    "hamming",
    "solution_space_size",
]


@lru_cache(maxsize=64)
def _opt_dofs(n_dof: int, fixed: tuple[int, ...]) -> np.ndarray:
    """Ascending optimizable DOF indices; bit p maps to _opt_dofs[p]."""
    mask = np.ones(n_dof, dtype=bool)
    mask[list(fixed)] = False
    return np.flatnonzero(mask)


@dataclass(frozen=True)
class Gene:
    """Shape word: packed bits over the DOFs outside the fixed set."""

    n_dof: int
    fixed: tuple[int, ...]
    bits: int

    def __post_init__(self) -> None:
        fixed = tuple(sorted(set(int(f) for f in self.fixed)))
        object.__setattr__(self, "fixed", fixed)
        if fixed and not (0 <= fixed[0] and fixed[-1] < self.n_dof):
            raise ValueError("fixed DOF outside [0, n_dof)")
        if self.bits < 0 or self.bits >> self.n_opt:
            raise ValueError("bits outside the optimizable word")

    @property
    def n_opt(self) -> int:
        return self.n_dof - len(self.fixed)

    @property
    def opt_dofs(self) -> np.ndarray:
        return _opt_dofs(self.n_dof, self.fixed)

    @classmethod
    def zeros(cls, n_dof: int, fixed=()) -> "Gene":
        return cls(n_dof, tuple(fixed), 0)

    @classmethod
    def ones(cls, n_dof: int, fixed=()) -> "Gene":
        g = cls(n_dof, tuple(fixed), 0)
        return cls(n_dof, g.fixed, (1 << g.n_opt) - 1)

    @classmethod
    def random(cls, n_dof: int, fixed, rng: np.random.Generator) -> "Gene":
        g = cls(n_dof, tuple(fixed), 0)
        word = 0
        for p in range(g.n_opt):
            if rng.integers(0, 2):
                word |= 1 << p
        return cls(n_dof, g.fixed, word)

    @classmethod
    def from_active(cls, n_dof: int, fixed, active) -> "Gene":
        """Gene whose active set is ``fixed | active``."""
        g = cls(n_dof, tuple(fixed), 0)
        pos = {int(d): p for p, d in enumerate(g.opt_dofs)}
        word = 0
        for d in active:
            d = int(d)
            if d in pos:
                word |= 1 << pos[d]
            elif d not in g.fixed:
                raise ValueError(f"DOF {d} not optimizable")
        return cls(n_dof, g.fixed, word)

    def bit(self, dof: int) -> bool:
        p = int(np.searchsorted(self.opt_dofs, dof))
        if p >= self.n_opt or self.opt_dofs[p] != dof:
            raise ValueError(f"DOF {dof} is fixed or out of range")
        return bool((self.bits >> p) & 1)

    def flip(self, dof: int) -> "Gene":
        p = int(np.searchsorted(self.opt_dofs, dof))
        if p >= self.n_opt or self.opt_dofs[p] != dof:
            raise ValueError(f"DOF {dof} is fixed or out of range")
        return Gene(self.n_dof, self.fixed, self.bits ^ (1 << p))

    def active_dofs(self) -> np.ndarray:
        """Sorted active DOFs: the fixed set plus every set bit."""
        on = [int(d) for p, d in enumerate(self.opt_dofs) if (self.bits >> p) & 1]
        return np.array(sorted(set(self.fixed) | set(on)), dtype=np.int64)

    def popcount(self) -> int:
        return self.bits.bit_count()

    def to_text(self) -> str:
        digits = max(1, -(-self.n_opt // 4))
        fx = ",".join(str(f) for f in self.fixed)
        return f"gene n_dof={self.n_dof} fixed={fx}\n{self.bits:0{digits}x}\n"

    @classmethod
    def from_text(cls, text: str) -> "Gene":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if len(lines) != 2 or not lines[0].startswith("gene "):
            raise ValueError("malformed gene text")
        fields = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
        n_dof = int(fields["n_dof"])
        fx = fields.get("fixed", "")
        fixed = tuple(int(x) for x in fx.split(",") if x != "")
        return cls(n_dof, fixed, int(lines[1], 16))


@dataclass(frozen=True)
class DofSets:
    """The per-shape DOF sets: all, fixed, evaluation, active, removable, addable."""

    g0: np.ndarray
    f: np.ndarray
    d: np.ndarray
    g: np.ndarray
    r: np.ndarray
    a: np.ndarray


def derive_sets(gene: Gene, d_eval=None) -> DofSets:
    """Set algebra for one shape: R = G \\ F and A = G0 \\ G, ascending order."""
    g0 = np.arange(gene.n_dof, dtype=np.int64)
    f = np.array(gene.fixed, dtype=np.int64)
    if d_eval is None:
        d = g0.copy()
    else:
        d = np.unique(np.asarray(list(d_eval), dtype=np.int64))
        if len(d) and (d[0] < 0 or d[-1] >= gene.n_dof):
            raise ValueError("evaluation domain outside [0, n_dof)")
    g = gene.active_dofs()
    r = np.setdiff1d(g, f, assume_unique=True)
    a = np.setdiff1d(g0, g, assume_unique=True)
    return DofSets(g0, f, d, g, r, a)


def hamming(a: Gene, b: Gene) -> int:
    """Number of differing bits; parameterizations must match."""
    if a.n_dof != b.n_dof or a.fixed != b.fixed:
        raise ValueError("genes have different parameterizations")
    return (a.bits ^ b.bits).bit_count()


def solution_space_size(gene: Gene) -> int:
    """Exact size of the binary solution space, 2**n_opt."""
    return 1 << gene.n_opt
