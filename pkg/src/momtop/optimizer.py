"""Memetic search: greedy sensitivity descent nested in an elitist GA.

Every agent is locally optimized by committing the most negative topology
sensitivity until no candidate improves (or the local budget runs out);
the global layer recombines the locally optimal words with binary
tournaments, single-point crossover and one-bit mutation, then keeps the
best half of parents and offspring.  All randomness flows from one seeded
generator, so a run is reproducible bit for bit.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from . import reanalysis
from .reanalysis import DenseSystem, ReanalysisError
from .shapes import Gene, derive_sets

__all__ = [
    "MemeticConfig",
    "Agent",
    "Population",
    "DescentResult",
    "MemeticResult",
    "init_population",
    "local_descent",
    "tournament_select",
    "crossover",
    "mutate",
    "elitist_merge",
    "memetic_run",
]


@dataclass(frozen=True)
class MemeticConfig:
    """Control parameters of one memetic run (local, global, memetic knobs)."""

    i_max: int | None = None        # max local iterations per descent
    eps_loc: float = 0.0            # local relative-improvement stop
    j_max: int = 50                 # max global iterations
    eps_glob: float = 0.0           # worst-agent relative-error stop
    n_agents: int = 6
    p_c: float = 1.0                # crossover probability
    p_m: float = 1.0                # mutation probability
    c_bnd: float = 1.0              # acceptable distance from the bound
    removals_enabled: bool = True
    additions_enabled: bool = True
    rng_seed: int = 0
    descent_scope: str = "survivors"   # "survivors" | "offspring"
    threads: int = 1

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_c <= 1.0 and 0.0 <= self.p_m <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.n_agents < 2:
            raise ValueError("need at least two agents")
        if self.c_bnd < 1.0:
            raise ValueError("c_bnd must be >= 1")
        if self.descent_scope not in ("survivors", "offspring"):
            raise ValueError("descent_scope must be 'survivors' or 'offspring'")
        if self.j_max < 0 or (self.i_max is not None and self.i_max < 0):
            raise ValueError("iteration caps must be nonnegative")


@dataclass(eq=False)
class Agent:
    gene: Gene
    value: float = np.inf
    descended: bool = False
    failed: bool = False


@dataclass
class Population:
    """Current generation with its best-ever record and convergence trace."""

    agents: list[Agent]
    generation: int = 0
    best_gene: Gene | None = None
    best_value: float = np.inf
    trace: list[tuple] = field(default_factory=list)

    def worst(self) -> float:
        return max(a.value for a in self.agents)

    def record_best(self) -> None:
        for a in self.agents:
            if a.value < self.best_value:
                self.best_value = a.value
                self.best_gene = a.gene


@dataclass(frozen=True)
class DescentResult:
    gene: Gene
    value: float
    trace: list[float]
    active_counts: list[int]
    reason: str
    commits: int


@dataclass(frozen=True)
class MemeticResult:
    best_gene: Gene
    best_value: float
    best_q: float | None
    termination_reason: str
    generations: int
    trace: list[tuple]           # (j, i, agent, f, q, active_dofs)
    final_values: list[float]
    bound_violated: bool


def init_population(config: MemeticConfig, n_dof: int, fixed,
                    rng: np.random.Generator) -> Population:
    """All-vacuum and all-material words plus uniform random fills."""
    fixed = tuple(fixed)
    genes = [Gene.zeros(n_dof, fixed), Gene.ones(n_dof, fixed)]
    genes += [
        Gene.random(n_dof, fixed, rng) for _ in range(config.n_agents - 2)
    ]
    return Population([Agent(g) for g in genes])


def local_descent(gene: Gene, system: DenseSystem, objective,
                  config: MemeticConfig) -> DescentResult:
    """Greedy commit of the most negative sensitivity until a stop fires."""
    state = reanalysis.init_state(system, gene.active_dofs())
    f = float(objective.value(state.i, state.active))
    trace = [f]
    counts = [state.size]
    commits = 0
    while True:
        if config.i_max is not None and commits >= config.i_max:
            return DescentResult(gene, f, trace, counts, "max_iterations", commits)
        sets = derive_sets(gene)
        smap = reanalysis.sweep_sensitivity(
            state, system, objective, sets,
            removals=config.removals_enabled,
            additions=config.additions_enabled,
        )
        pick = smap.best()
        if pick is None:
            return DescentResult(gene, f, trace, counts, "local_minimum", commits)
        dof, action, tau = pick
        if action == reanalysis.REMOVE:
            state = reanalysis.commit_remove(state, dof, system)
        else:
            state = reanalysis.commit_add(state, dof, system)
        gene = gene.flip(dof)
        commits += 1
        f_next = f + tau
        trace.append(f_next)
        counts.append(state.size)
        if f > 0 and (f - f_next) / f < config.eps_loc:
            return DescentResult(gene, f_next, trace, counts, "eps_loc", commits)
        f = f_next


def tournament_select(population: Population, rng: np.random.Generator) -> list[int]:
    """N binary tournaments; each promotes the better of two distinct agents."""
    n = len(population.agents)
    pool = []
    for _ in range(n):
        a, b = rng.choice(n, size=2, replace=False)
        fa, fb = population.agents[a].value, population.agents[b].value
        pool.append(int(a) if (fa, a) <= (fb, b) else int(b))
    return pool


def crossover(parents: list[Gene], p_c: float, rng: np.random.Generator) -> list[Gene]:
    """Shuffle the pool, consume adjacent pairs, cut both words at one point.

    Each pair yields two complementary offspring; with probability 1 - p_c a
    pair is copied through unchanged.  Returns exactly len(parents) genes.
    """
    order = rng.permutation(len(parents))
    out: list[Gene] = []
    for j in range(0, len(order) - 1, 2):
        a, b = parents[order[j]], parents[order[j + 1]]
        if a.n_opt >= 2 and rng.random() < p_c:
            cut = int(rng.integers(1, a.n_opt))
            mask = (1 << cut) - 1
            full = (1 << a.n_opt) - 1
            c1 = (a.bits & mask) | (b.bits & (full ^ mask))
            c2 = (b.bits & mask) | (a.bits & (full ^ mask))
            out.append(Gene(a.n_dof, a.fixed, c1))
            out.append(Gene(b.n_dof, b.fixed, c2))
        else:
            out.append(a)
            out.append(b)
    if len(order) % 2:
        out.append(parents[order[-1]])
    return out


def mutate(gene: Gene, p_m: float, rng: np.random.Generator) -> Gene:
    """With probability p_m flip exactly one uniformly chosen letter."""
    if gene.n_opt == 0 or rng.random() >= p_m:
        return gene
    p = int(rng.integers(0, gene.n_opt))
    return Gene(gene.n_dof, gene.fixed, gene.bits ^ (1 << p))


def elitist_merge(parents: list[Agent], offspring: list[Agent],
                  n_keep: int) -> list[Agent]:
    """Best n_keep of the combined set; ties keep parent-first order."""
    merged = list(parents) + list(offspring)
    order = sorted(range(len(merged)), key=lambda idx: (merged[idx].value, idx))
    return [merged[idx] for idx in order[:n_keep]]


def _evaluate_plain(agent: Agent, system: DenseSystem, objective) -> None:
    try:
        state = reanalysis.init_state(system, agent.gene.active_dofs())
        agent.value = float(objective.value(state.i, state.active))
    except (ReanalysisError, ValueError):
        agent.value = np.inf
        agent.failed = True


def _descend_agent(agent: Agent, system: DenseSystem, objective,
                   config: MemeticConfig) -> DescentResult | None:
    try:
        res = local_descent(agent.gene, system, objective, config)
    except (ReanalysisError, ValueError):
        agent.value = np.inf
        agent.failed = True
        agent.descended = True
        return None
    agent.gene = res.gene
    agent.value = res.value
    agent.descended = True
    return res


def _descend_all(agents: list[Agent], system, objective, config,
                 pop: Population, generation: int, q_lb) -> None:
    todo = [(idx, a) for idx, a in enumerate(agents) if not a.descended]

    def run(item):
        idx, agent = item
        return idx, agent, _descend_agent(agent, system, objective, config)

    if config.threads > 1 and len(todo) > 1:
        with concurrent.futures.ThreadPoolExecutor(config.threads) as ex:
            results = list(ex.map(run, todo))
    else:
        results = [run(item) for item in todo]
    for idx, agent, res in results:
        if res is None:
            pop.trace.append((generation, 0, idx, np.inf, np.nan, 0))
            continue
        for i, (f, m) in enumerate(zip(res.trace, res.active_counts)):
            q = f / q_lb if q_lb else np.nan
            pop.trace.append((generation, i, idx, f, q, m))


def memetic_run(system: DenseSystem, objective, config: MemeticConfig,
                fixed=(), q_lb: float | None = None) -> MemeticResult:
    """Full memetic loop (Table II controls, Table III termination)."""
    rng = np.random.default_rng(config.rng_seed)
    pop = init_population(config, system.n_dof, fixed, rng)
    _descend_all(pop.agents, system, objective, config, pop, 0, q_lb)
    if all(a.failed for a in pop.agents):
        raise RuntimeError(
            "every agent failed its factorization; the grid or fixed set "
            "leaves no solvable shapes"
        )
    pop.agents.sort(key=lambda a: a.value)
    pop.record_best()

    reason = "max_iterations"
    generations = 0
    for j in range(1, config.j_max + 1):
        if q_lb is not None and pop.best_value / q_lb < config.c_bnd:
            reason = "bound"
            break
        worst_prev = pop.worst()

        pool_idx = tournament_select(pop, rng)
        pool = [pop.agents[kk].gene for kk in pool_idx]
        children = [mutate(g, config.p_m, rng) for g in crossover(pool, config.p_c, rng)]
        offspring = [Agent(g) for g in children]
        if config.descent_scope == "offspring":
            _descend_all(offspring, system, objective, config, pop, j, q_lb)
        else:
            for oi, o in enumerate(offspring):
                _evaluate_plain(o, system, objective)
                q = o.value / q_lb if q_lb else np.nan
                pop.trace.append(
                    (j, 0, len(pop.agents) + oi, o.value, q,
                     len(o.gene.active_dofs()))
                )
        pop.agents = elitist_merge(pop.agents, offspring, config.n_agents)
        if config.descent_scope == "survivors":
            _descend_all(pop.agents, system, objective, config, pop, j, q_lb)
            pop.agents.sort(key=lambda a: a.value)
        pop.generation = j
        generations = j
        pop.record_best()

        worst_new = pop.worst()
        if worst_prev > 0 and (worst_prev - worst_new) / worst_prev < config.eps_glob:
            reason = "eps_glob"
            break
    else:
        if q_lb is not None and pop.best_value / q_lb < config.c_bnd:
            reason = "bound"

    finite = [f for (_, _, _, f, _, _) in pop.trace if np.isfinite(f)]
    violated = bool(
        q_lb is not None and finite and min(finite) < q_lb * (1 - 1e-6)
    )
    return MemeticResult(
        best_gene=pop.best_gene,
        best_value=pop.best_value,
        best_q=(pop.best_value / q_lb) if q_lb else None,
        termination_reason=reason,
        generations=generations,
        trace=pop.trace,
        final_values=[a.value for a in pop.agents],
        bound_violated=violated,
    )
