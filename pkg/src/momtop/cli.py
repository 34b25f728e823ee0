"""Command-line front end: assemble, bound, optimize, sensitivity, eval, verify.

Exit codes: 0 success, 2 configuration or usage error, 3 I/O or file-format
error, 4 numerical failure.  Every optimize run emits a manifest with input
hashes so ``verify`` can re-check reproducibility later.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .assembly import ExcitationSpec
from .bounds import BoundError, solve_bound
from .mesh import PlateSpec, central_gap_dof
from .metrics import (
    CompositeObjective,
    MetricError,
    ObjectiveSpec,
    ObjectiveTerm,
    complex_power,
    input_impedance,
    lost_power,
    q_matching,
    q_untuned,
    radiated_power,
)
from .operators import (
    ContainerError,
    assemble_plate_operators,
    load_operators,
    save_operators,
)
from .optimizer import MemeticConfig, memetic_run
from .reanalysis import DenseSystem, ReanalysisError, init_state, sweep_sensitivity
from .shapes import Gene, derive_sets

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


_CONFIG_KEYS = {
    "seed": int,
    "n_agents": int,
    "i_max": (int, type(None)),
    "eps_loc": (int, float),
    "j_max": int,
    "eps_glob": (int, float),
    "p_c": (int, float),
    "p_m": (int, float),
    "c_bnd": (int, float),
    "removals": bool,
    "additions": bool,
    "descent_scope": str,
    "threads": int,
    "fixed_dofs": list,
    "gap_dof": (int, type(None)),
    "eval_domain": (list, type(None)),
    "objective": dict,
    "use_bound": bool,
}

_TERM_KINDS = {
    "q_untuned",
    "q_matching",
    "radiated_power",
    "lost_power",
    "radiation_intensity",
    "input_impedance_target",
    "custom_quadratic",
}


def load_run_config(path: str) -> dict:
    """Parse and validate a run config; reports every bad key at once."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    problems = []
    for key, val in raw.items():
        if key not in _CONFIG_KEYS:
            problems.append(f"unknown key {key!r}")
            continue
        want = _CONFIG_KEYS[key]
        if not isinstance(val, want):
            problems.append(f"key {key!r}: expected {want}, got {type(val).__name__}")
    for term in raw.get("objective", {}).get("terms", []):
        kind = term.get("kind")
        if kind not in _TERM_KINDS:
            problems.append(f"objective term kind {kind!r} unknown")
        if not isinstance(term.get("weight", None), (int, float)):
            problems.append(f"objective term {kind!r}: weight missing or not a number")
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(problems))
    return raw


def _objective_from_config(cfg: dict) -> ObjectiveSpec:
    obj = cfg.get("objective")
    if not obj:
        return ObjectiveSpec.q_factor(1.0, 1.0)
    terms = tuple(
        ObjectiveTerm(t["kind"], float(t["weight"]), t.get("params", {}))
        for t in obj["terms"]
    )
    domain = cfg.get("eval_domain")
    return ObjectiveSpec(terms, tuple(domain) if domain else None)


def _memetic_config(cfg: dict) -> MemeticConfig:
    return MemeticConfig(
        i_max=cfg.get("i_max"),
        eps_loc=float(cfg.get("eps_loc", 0.0)),
        j_max=int(cfg.get("j_max", 50)),
        eps_glob=float(cfg.get("eps_glob", 0.0)),
        n_agents=int(cfg.get("n_agents", 6)),
        p_c=float(cfg.get("p_c", 1.0)),
        p_m=float(cfg.get("p_m", 1.0)),
        c_bnd=float(cfg.get("c_bnd", 1.0)),
        removals_enabled=bool(cfg.get("removals", True)),
        additions_enabled=bool(cfg.get("additions", True)),
        rng_seed=int(cfg.get("seed", 0)),
        descent_scope=str(cfg.get("descent_scope", "survivors")),
        threads=int(cfg.get("threads", 1)),
    )


def _fixed_dofs(cfg: dict) -> tuple[int, ...]:
    fixed = set(int(x) for x in cfg.get("fixed_dofs", []))
    if cfg.get("gap_dof") is not None:
        fixed.add(int(cfg["gap_dof"]))
    return tuple(sorted(fixed))


# -- subcommands -----------------------------------------------------------


def cmd_assemble(args) -> int:
    lx, _, ly = args.plate.partition("x")
    spec = PlateSpec(float(lx), float(ly), args.nx, args.ny, args.ka)
    if args.plane_wave:
        vals = [float(x) for x in args.plane_wave.split(",")]
        amp = vals[6] if len(vals) > 6 else 1.0
        exc = ExcitationSpec(
            "plane-wave", direction=tuple(vals[0:3]),
            polarization=tuple(vals[3:6]), amplitude=amp,
        )
        gap = None
    else:
        from .mesh import build_mesh

        gap = (
            central_gap_dof(build_mesh(spec))
            if args.gap == "auto"
            else int(args.gap)
        )
        exc = ExcitationSpec("delta-gap", gap_dof=gap)
    ports = []
    for p in args.port or []:
        dof, r, l, c = p.split(",")
        ports.append((int(dof), float(r), float(l), float(c)))
    t0 = time.time()
    ops, mesh = assemble_plate_operators(
        spec, exc, rho=args.rho, ports=ports, l_max=args.lmax, delta=args.delta
    )
    save_operators(ops, args.out)
    print(f"n_dof={mesh.n_dof} gap={gap} file={args.out} "
          f"assembled in {time.time() - t0:.2f}s")
    return EXIT_OK


def cmd_bound(args) -> int:
    ops = load_operators(args.operators)
    mask = [int(x) for x in args.mask.split(",")] if args.mask else None
    res = solve_bound(ops, d_mask=mask)
    print(json.dumps(res.as_dict(), indent=2))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(res.as_dict(), fh, indent=2)
    if args.current_csv:
        with open(args.current_csv, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["dof", "re", "im"])
            cur = np.asarray(res.optimal_current, dtype=complex)
            for n, c in enumerate(cur):
                wr.writerow([n, repr(c.real), repr(c.imag)])
    return EXIT_OK


def _write_trace(path: str, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["j", "i", "agent", "f", "q", "active_dofs"])
        for j, i, agent, f, q, m in rows:
            wr.writerow([j, i, agent, repr(float(f)), repr(float(q)), m])


def _generation_summaries(rows):
    per_gen: dict[int, list[float]] = {}
    for j, _, _, f, _, _ in rows:
        if np.isfinite(f):
            per_gen.setdefault(j, []).append(f)
    for j in sorted(per_gen):
        fs = per_gen[j]
        yield {"j": j, "best_f": min(fs), "worst_f": max(fs),
               "mean_f": sum(fs) / len(fs)}


def cmd_optimize(args) -> int:
    ops = load_operators(args.operators)
    cfg = load_run_config(args.config)
    mcfg = _memetic_config(cfg)
    fixed = _fixed_dofs(cfg)
    spec = _objective_from_config(cfg)
    objective = CompositeObjective(ops, spec)
    q_lb = solve_bound(ops).q_lb if cfg.get("use_bound", True) else None

    os.makedirs(args.out_dir, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    result = memetic_run(
        DenseSystem(ops.z_total(), ops.v), objective, mcfg,
        fixed=fixed, q_lb=q_lb,
    )
    finished = datetime.datetime.now(datetime.timezone.utc).isoformat()

    _write_trace(os.path.join(args.out_dir, "trace.csv"), result.trace)
    with open(os.path.join(args.out_dir, "metrics.jsonl"), "w",
              encoding="utf-8") as fh:
        for rec in _generation_summaries(result.trace):
            fh.write(json.dumps(rec) + "\n")
    report = {
        "best_f": result.best_value,
        "best_q": result.best_q,
        "q_lb": q_lb,
        "termination_reason": result.termination_reason,
        "generations": result.generations,
        "final_values": result.final_values,
        "bound_violated": result.bound_violated,
        "best_gene": result.best_gene.to_text(),
        "active_dofs": [int(d) for d in result.best_gene.active_dofs()],
    }
    with open(os.path.join(args.out_dir, "result.json"), "w",
              encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    manifest = {
        "tool_version": __version__,
        "config_path": os.path.abspath(args.config),
        "config_sha256": _sha256(args.config),
        "operator_path": os.path.abspath(args.operators),
        "operator_sha256": _sha256(args.operators),
        "rng_seed": mcfg.rng_seed,
        "started": started,
        "finished": finished,
        "termination_reason": result.termination_reason,
    }
    with open(os.path.join(args.out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"best f = {result.best_value:.6g}"
          + (f", q = {result.best_q:.4f}" if result.best_q else "")
          + f", stop: {result.termination_reason}")
    return EXIT_OK


def _load_gene(path: str) -> Gene:
    with open(path, "r", encoding="utf-8") as fh:
        return Gene.from_text(fh.read())


def cmd_sensitivity(args) -> int:
    ops = load_operators(args.operators)
    gene = _load_gene(args.gene)
    cfg = load_run_config(args.config) if args.config else {}
    spec = _objective_from_config(cfg)
    objective = CompositeObjective(ops, spec)
    system = DenseSystem(ops.z_total(), ops.v)
    state = init_state(system, gene.active_dofs())
    smap = sweep_sensitivity(state, system, objective, derive_sets(gene))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["dof", "action", "tau"])
        for dof, act, tau in zip(smap.dof, smap.action, smap.tau):
            wr.writerow([int(dof), "remove" if act == 0 else "add", repr(float(tau))])
    sidecar = {
        "objective_value": smap.objective_value,
        "gene": gene.to_text(),
        "excluded": int(np.count_nonzero(smap.excluded)),
    }
    with open(args.out + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
    print(f"objective = {smap.objective_value:.6g}, "
          f"{len(smap.dof)} candidates -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ops = load_operators(args.operators)
    gene = _load_gene(args.gene)
    cfg = load_run_config(args.config) if args.config else {}
    spec = _objective_from_config(cfg)
    objective = CompositeObjective(ops, spec)
    system = DenseSystem(ops.z_total(), ops.v)
    state = init_state(system, gene.active_dofs())
    act = state.active
    sub = np.ix_(act, act)
    i = state.i
    metrics = {
        "f": objective.value(i, act),
        "q_untuned": q_untuned(i, ops.w[sub], ops.r0[sub]),
        "q_matching": q_matching(i, ops.x_total[sub], ops.r0[sub]),
        "radiated_power": radiated_power(i, ops.r0[sub]),
        "lost_power": lost_power(i, ops.r_loss[sub]),
        "complex_power": [complex_power(i, state.v).real,
                          complex_power(i, state.v).imag],
        "active_dofs": int(len(act)),
    }
    gap = cfg.get("gap_dof")
    if gap is not None and int(gap) in act:
        z_t = system.z[np.ix_(act, act)]
        z_in = input_impedance(i, z_t, int(gap), active=act)
        metrics["z_in"] = [z_in.real, z_in.imag]
    out = json.dumps(metrics, indent=2)
    print(out)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    run_dir = args.run_dir
    with open(os.path.join(run_dir, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    failures = []
    for key in ("config", "operator"):
        path = manifest[f"{key}_path"]
        want = manifest[f"{key}_sha256"]
        if not os.path.exists(path):
            failures.append(f"{key} file missing: {path}")
        elif _sha256(path) != want:
            failures.append(f"{key} hash mismatch: {path}")
    if failures:
        for f in failures:
            print("FAIL:", f)
        return EXIT_IO

    cfg = load_run_config(manifest["config_path"])
    ops = load_operators(manifest["operator_path"])
    mcfg = _memetic_config(cfg)
    replay_gens = min(2, mcfg.j_max)
    mcfg = dataclasses.replace(mcfg, j_max=replay_gens)
    objective = CompositeObjective(ops, _objective_from_config(cfg))
    q_lb = solve_bound(ops).q_lb if cfg.get("use_bound", True) else None
    result = memetic_run(
        DenseSystem(ops.z_total(), ops.v), objective, mcfg,
        fixed=_fixed_dofs(cfg), q_lb=q_lb,
    )
    stored = []
    with open(os.path.join(run_dir, "trace.csv"), "r", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            if int(row["j"]) <= replay_gens:
                stored.append(
                    (int(row["j"]), int(row["i"]), int(row["agent"]),
                     float(row["f"]))
                )
    replayed = [
        (j, i, agent, float(f)) for (j, i, agent, f, _, _) in result.trace
    ]
    if stored != replayed[: len(stored)] or len(stored) != len(replayed):
        print("FAIL: replay of the first generations diverges from the trace")
        return EXIT_NUMERICAL
    print(f"OK: hashes match; first {replay_gens} generations reproduce "
          f"({len(stored)} trace rows)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="momtop",
        description="MoM topology optimization of plate antennas",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("assemble", help="build operators for a plate grid")
    a.add_argument("--plate", required=True, help="LXxLY, e.g. 1x2 (meters)")
    a.add_argument("--nx", type=int, required=True)
    a.add_argument("--ny", type=int, required=True)
    a.add_argument("--ka", type=float, required=True)
    a.add_argument("--gap", default="auto",
                   help="delta-gap DOF index or 'auto' (central edge)")
    a.add_argument("--plane-wave", default=None,
                   help="dx,dy,dz,ex,ey,ez[,amplitude] instead of a gap")
    a.add_argument("--rho", type=float, default=0.0,
                   help="uniform sheet resistivity (ohm/sq)")
    a.add_argument("--port", action="append",
                   help="lumped series RLC: dof,R,L,C (C=inf allowed)")
    a.add_argument("--lmax", type=int, default=None)
    a.add_argument("--delta", type=float, default=1e-4)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_assemble)

    b = sub.add_parser("bound", help="fundamental Q-factor lower bound")
    b.add_argument("operators")
    b.add_argument("--mask", default=None, help="restrict to DOFs i,j,...")
    b.add_argument("--out", default=None)
    b.add_argument("--current-csv", default=None)
    b.set_defaults(func=cmd_bound)

    o = sub.add_parser("optimize", help="run the memetic optimization")
    o.add_argument("operators")
    o.add_argument("--config", required=True)
    o.add_argument("--out-dir", required=True)
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("sensitivity", help="topology sensitivity map of a gene")
    s.add_argument("operators")
    s.add_argument("--gene", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sensitivity)

    e = sub.add_parser("eval", help="one-shot metric evaluation of a gene")
    e.add_argument("operators")
    e.add_argument("--gene", required=True)
    e.add_argument("--config", default=None)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="re-hash inputs and replay a run prefix")
    v.add_argument("run_dir")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BoundError, ReanalysisError, MetricError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContainerError as exc:
        print(f"container error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
