"""Command-line entry point: multitime {verify-family,evolve,scatter,kappa-map,sweep}."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import models, scattering, wkb
from .config import TASKS, ExperimentConfig, IntegratorConfig, ModelConfig, load_config
from .errors import ConfigError, MultitimeError, ParameterError, VerificationError
from .evolution import IntegratorOptions, ParamPath, initial_state, propagate
from .family import HamiltonianFamily, box_grid, reports_to_csv, scan_family

THREADS_ENV = "MULTITIME_THREADS"


def artifact_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BuiltModel:
    family: HamiltonianFamily
    config: ModelConfig
    four_state: models.FourStateParams | None = None


def build_model(mc: ModelConfig) -> BuiltModel:
    p = mc.params
    if mc.name in ("four_state", "four_state_h"):
        fp = models.FourStateParams(**p)
        fam = models.four_state_family(fp) if mc.name == "four_state" else models.four_state_h_family(fp)
        return BuiltModel(fam, mc, fp)
    if mc.name == "lz2":
        return BuiltModel(models.lz_two_state(p["b"], p["g"]), mc)
    if mc.name == "tavis_cummings":
        cutoff = p.get("boson_cutoff", 2)
        tp = models.TCParams(p["n_spins"], tuple(p["epsilons"]), p["g"], cutoff)
        return BuiltModel(models.tavis_cummings_family(tp, sector=p.get("sector")), mc)
    if mc.name == "gaudin":
        gp = models.GaudinParams(p["n_spins"], tuple(p["epsilons"]), p["B"])
        return BuiltModel(models.gaudin_family(gp), mc)
    raise ConfigError(f"unknown model {mc.name!r}")


def integrator_options(ic: IntegratorConfig) -> IntegratorOptions:
    return IntegratorOptions(steps=ic.steps, tol=ic.tol, cap=ic.cap, max_phase=ic.max_phase)


def _reference_point(built: BuiltModel) -> np.ndarray:
    """Natural parameter point of a model (time slot at 0)."""
    p = built.config.params
    name = built.config.name
    if name == "four_state":
        return np.array([0.0, built.four_state.e0])
    if name in ("tavis_cummings", "gaudin"):
        head = p["B"] if name == "gaudin" else 0.0
        return np.array([head, *p["epsilons"]])
    return np.zeros(built.family.n_generators)


def default_box(built: BuiltModel) -> tuple[np.ndarray, np.ndarray]:
    """Time slot in [-3, 3]; epsilons within a quarter of their minimum spacing; B in [B/2, 3B/2]."""
    centre = _reference_point(built)
    lo, hi = centre.copy(), centre.copy()
    name = built.config.name
    if name == "gaudin":
        b = centre[0]
        lo[0], hi[0] = sorted((0.5 * b, 1.5 * b))
    else:
        lo[0], hi[0] = -3.0, 3.0
    if name == "four_state":
        lo[1], hi[1] = -3.0, 3.0
    if name in ("tavis_cummings", "gaudin"):
        eps = np.asarray(built.config.params["epsilons"])
        gap = np.min(np.abs(np.diff(np.sort(eps)))) if eps.size > 1 else 1.0
        lo[1:] -= 0.25 * gap
        hi[1:] += 0.25 * gap
    return lo, hi


def scatter_path_for(built: BuiltModel):
    """R -> straight scattering path through the model's reference point."""
    name = built.config.name
    if name == "four_state":
        return lambda R: scattering.four_state_straight_path(built.four_state, R)
    if name == "four_state_h":
        return lambda R: ParamPath(([-R], [R]))
    if name == "lz2":
        return lambda R: ParamPath(([-R], [R]))
    if name == "tavis_cummings":
        return lambda R: scattering.time_sweep_path(built.config.params["epsilons"], R)
    raise ConfigError(f"scatter is not defined for model {name!r}")


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunContext:
    threads: int = 1
    strict: bool = False
    trace: bool = False
    spectrum: bool = False


@dataclass
class TaskResult:
    text: str
    summary: str
    results: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    failed_verification: str | None = None
    extra_files: dict = field(default_factory=dict)


def task_verify(cfg: ExperimentConfig, built: BuiltModel, ctx: RunContext) -> TaskResult:
    vc = cfg.verify
    fam = built.family
    if vc.lower is not None:
        lo, hi = np.asarray(vc.lower, float), np.asarray(vc.upper, float)
        if lo.size != fam.n_generators or hi.size != fam.n_generators:
            raise ConfigError(f"verify box needs {fam.n_generators} coordinates per corner")
    else:
        lo, hi = default_box(built)
    grid = box_grid(lo, hi, vc.points)
    if vc.random_points:
        rng = np.random.default_rng(cfg.seed)
        grid += [lo + (hi - lo) * rng.random(lo.size) for _ in range(vc.random_points)]
    worst = scan_family(fam, grid, vc.method, ctx.threads)
    reports = [worst[k] for k in sorted(worst)]
    worst_norm = max((r.full_curvature_norm for r in reports), default=0.0)
    summary = f"verify-family {fam.name}: {len(grid)} points, {len(reports)} pairs, worst full curvature norm {worst_norm:.3e}"
    failed = None
    if worst_norm >= vc.threshold:
        failed = f"worst full curvature norm {worst_norm:.3e} exceeds threshold {vc.threshold:g}"
    return TaskResult(
        reports_to_csv(reports, fam.slot_names),
        summary,
        {"worst_full_norm": worst_norm, "pairs": [r.row() for r in reports]},
        {"box": [lo.tolist(), hi.tolist()], "points": len(grid)},
        failed,
    )


def _parse_initial(dim: int, initial):
    if isinstance(initial, int):
        return initial
    if isinstance(initial, list):
        if initial and all(isinstance(v, list) for v in initial):
            if any(len(v) != 2 for v in initial):
                raise ConfigError("evolve.initial: complex entries must be [re, im] pairs")
            return np.array([complex(a, b) for a, b in initial])
        return np.asarray(initial, dtype=complex)
    raise ConfigError(f"evolve.initial: expected a basis index or a vector, got {initial!r}")


def task_evolve(cfg: ExperimentConfig, built: BuiltModel, ctx: RunContext) -> TaskResult:
    ec = cfg.evolve
    if ec is None:
        raise ConfigError("evolve task needs an 'evolve' block")
    fam = built.family
    path = ParamPath(tuple(ec.path))
    psi0 = _parse_initial(fam.dim, ec.initial)
    trace, spectrum = ctx.trace, ctx.spectrum
    rows, spec_rows = [], []

    def record(k, s, x, u):
        if trace:
            psi = u @ state0
            rows.append([k, s, *x.tolist(), *(np.abs(psi) ** 2).tolist()])
        if spectrum:
            spec_rows.append([k, s, *x.tolist(), *np.linalg.eigvalsh(fam.matrix(0, x)).tolist()])

    state0 = initial_state(fam.dim, psi0)
    hook = record if (trace or spectrum) else None
    psi, prop = propagate(fam, path, state0, integrator_options(ec.integrator), hook)
    pops = np.abs(psi) ** 2

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", "re", "im", "population"])
    for lab, z, pop in zip(fam.basis_labels, psi, pops):
        w.writerow([lab, _g(z.real), _g(z.imag), _g(pop)])
    extra = {}
    if trace:
        extra["trace.csv"] = _table(["segment", "s", *fam.slot_names, *(f"P_{lab}" for lab in fam.basis_labels)], rows)
    if spectrum:
        extra["spectrum.csv"] = _table(["segment", "s", *fam.slot_names, *(f"E{i}" for i in range(fam.dim))], spec_rows)
    summary = f"evolve {fam.name}: {prop.steps_taken} steps, unitarity defect {prop.unitarity_defect:.2e}"
    return TaskResult(
        buf.getvalue(),
        summary,
        {"amplitudes": [[float(z.real), float(z.imag)] for z in psi], "populations": pops.tolist()},
        {"steps": prop.steps_taken, "unitarity_defect": prop.unitarity_defect, "method": prop.method},
        extra_files=extra,
    )


def _g(x) -> str:
    return format(float(x), ".17g")


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_g(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def scatter_matrix(cfg: ExperimentConfig, built: BuiltModel, strict: bool = False) -> scattering.TransitionMatrix:
    sc = cfg.scatter
    fam = built.family
    name = built.config.name
    regime = None
    if built.four_state is not None:
        regime = scattering.REGIME_TAGS[scattering.four_state_regime(built.four_state)]
    if sc.method == "closed-form":
        if built.four_state is not None:
            return scattering.four_state_closed_form(built.four_state)
        if name == "lz2":
            p = scattering.lz_probability(built.config.params["g"], abs(built.config.params["b"]))
            return scattering.TransitionMatrix(np.array([[p, 1 - p], [1 - p, p]]), fam.basis_labels)
        raise ConfigError(f"no closed form for model {name!r}")
    if sc.method == "chain":
        if name == "four_state":
            plan = scattering.four_state_event_sequence(built.four_state, sc.R)
        else:
            plan = scattering.crossing_plan(fam, scatter_path_for(built)(sc.R))
        _, tm = scattering.chain_scatter(plan)
        return replace(tm, regime=regime, diagnostics={"events": [list(ev.pair) for ev in plan.events]})
    opts = integrator_options(sc.integrator)
    path_for = scatter_path_for(built)
    if sc.method == "numeric":
        return scattering.numeric_transition_matrix(fam, path_for, sc.R, opts, drift=sc.drift, strict=strict, regime=regime)
    # deformed
    straight = path_for(sc.R)
    via = sc.waypoints if sc.waypoints is not None else "params-first"
    if sc.waypoints is None and name not in ("four_state",):
        raise ConfigError("scatter.waypoints are required for deformed paths of this model")
    tm = scattering.deformed_path_transition_matrix(fam, straight.start, straight.end, via, opts, strict=strict)
    return replace(tm, regime=regime)


def task_scatter(cfg: ExperimentConfig, built: BuiltModel, ctx: RunContext) -> TaskResult:
    tm = scatter_matrix(cfg, built, ctx.strict)
    diag = {k: v for k, v in tm.diagnostics.items()}
    diag["regime"] = tm.regime
    diag["stochastic_defect"] = tm.stochastic_defect
    summary = f"scatter {built.family.name} ({cfg.scatter.method}): P[0,0]={tm.entries[0, 0]:.6f}"
    if tm.regime:
        summary += f", regime {tm.regime}"
    return TaskResult(tm.to_csv(), summary, {"P": tm.entries.tolist(), "labels": list(tm.labels)}, diag)


def task_kappa(cfg: ExperimentConfig, built: BuiltModel, ctx: RunContext) -> TaskResult:
    kc = cfg.kappa
    if kc is None:
        raise ConfigError("kappa-map task needs a 'kappa' block")
    fam = built.family
    n = fam.dim
    if max(kc.pair) > n:
        raise ConfigError(f"kappa.pair: states are numbered 1..{n}")
    xs = np.linspace(kc.x[0], kc.x[1], int(kc.x[2]))
    ys = np.linspace(kc.y[0], kc.y[1], int(kc.y[2]))
    slopes = ()
    if built.config.name == "four_state":
        slopes = wkb.four_state_boundary_slopes(built.four_state.b1, built.four_state.b2)
    base = kc.base if kc.base is not None else _reference_point(built).tolist()
    dm = wkb.kappa_map(fam, xs, ys, (kc.pair[0] - 1, kc.pair[1] - 1), tuple(kc.slots), base, slopes)
    xm, ym = dm.argmax()
    summary = f"kappa-map {fam.name} pair {kc.pair}: max at ({xm:g}, {ym:g}), {int(dm.masked.sum())} masked points"
    return TaskResult(
        dm.to_csv(),
        summary,
        {"argmax": [xm, ym], "boundary_polylines": dm.boundary_polylines()},
        {"masked": int(dm.masked.sum())},
    )


def _sweep_row(payload):
    cfg_dict, parameter, value = payload
    try:
        cfg = ExperimentConfig.parse(cfg_dict)
        cfg = replace(cfg, model=cfg.model.with_param(parameter, value))
        built = build_model(cfg.model)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = TASK_RUNNERS[cfg.sweep.task](cfg, built, RunContext())
        return _scalars(cfg.sweep.task, res, built), ""
    except MultitimeError as exc:
        return {}, f"{type(exc).__name__}: {exc}"
    except ValueError as exc:
        return {}, f"{type(exc).__name__}: {exc}"


def _scalars(task: str, res: TaskResult, built: BuiltModel) -> dict:
    labels = built.family.basis_labels
    if task == "scatter":
        p = res.results["P"]
        return {f"P_{a}_{b}": p[i][k] for i, a in enumerate(labels) for k, b in enumerate(labels)}
    if task == "evolve":
        return {f"P_{lab}": x for lab, x in zip(labels, res.results["populations"])}
    return {"worst_full_norm": res.results["worst_full_norm"]}


def task_sweep(cfg: ExperimentConfig, built: BuiltModel, ctx: RunContext) -> TaskResult:
    sw = cfg.sweep
    if sw is None:
        raise ConfigError("sweep task needs a 'sweep' block")
    cfg.model.with_param(sw.parameter, sw.start)  # validates the name
    values = np.linspace(sw.start, sw.stop, sw.count).tolist()
    base = cfg.to_dict()
    payloads = [(base, sw.parameter, v) for v in values]
    if ctx.threads > 1:
        with ProcessPoolExecutor(max_workers=ctx.threads) as pool:
            rows = list(pool.map(_sweep_row, payloads))
    else:
        rows = [_sweep_row(p) for p in payloads]
    columns = []
    for scal, _ in rows:
        for key in scal:
            if key not in columns:
                columns.append(key)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([sw.parameter, *columns, "error"])
    for v, (scal, err) in zip(values, rows):
        w.writerow([_g(v), *(_g(scal[c]) if c in scal else "" for c in columns), err])
    failures = sum(1 for _, err in rows if err)
    summary = f"sweep {sw.parameter} over {sw.count} values ({sw.task}): {failures} failed"
    return TaskResult(buf.getvalue(), summary, {"values": values}, {"failures": failures})


TASK_RUNNERS = {
    "verify-family": task_verify,
    "evolve": task_evolve,
    "scatter": task_scatter,
    "kappa-map": task_kappa,
    "sweep": task_sweep,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def thread_count(flag: int | None) -> int:
    if flag is not None:
        n = flag
    elif os.environ.get(THREADS_ENV):
        try:
            n = int(os.environ[THREADS_ENV])
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from exc
    else:
        n = 1
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="multitime", description="Commuting Hamiltonian families and multi-time evolution.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment configuration")
    common.add_argument("--out", help="output file (stdout when omitted)")
    common.add_argument("--threads", type=int, help=f"worker cap (default: ${THREADS_ENV} or 1)")
    common.add_argument("--seed", type=int, help="seed for randomized grids (overrides the config)")
    common.add_argument("--strict", action="store_true", help="turn warnings and threshold breaches into failures")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in TASKS:
        sp = sub.add_parser(name, parents=[common])
        if name == "evolve":
            sp.add_argument("--trace", action="store_true", help="write per-step populations to <out>.trace.csv")
            sp.add_argument("--trace-spectrum", action="store_true", help="write per-step H_0 levels to <out>.spectrum.csv")
    return ap


def run(cfg: ExperimentConfig, command: str, ctx: RunContext | None = None) -> TaskResult:
    if cfg.task is not None and cfg.task != command:
        raise ConfigError(f"config names task {cfg.task!r} but the command is {command!r}")
    return TASK_RUNNERS[command](cfg, build_model(cfg.model), ctx or RunContext())


def _json_text(res: TaskResult) -> str:
    return json.dumps({"results": res.results, "diagnostics": res.diagnostics}, indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        with warnings.catch_warnings():
            if args.strict:
                warnings.simplefilter("error", scattering.HorizonWarning)
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = replace(cfg, seed=args.seed)
            threads = thread_count(args.threads)
            ctx = RunContext(threads, args.strict, getattr(args, "trace", False), getattr(args, "trace_spectrum", False))
            res = run(cfg, args.command, ctx)
        if res.failed_verification and args.strict:
            raise VerificationError(res.failed_verification)
    except scattering.HorizonWarning as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MultitimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ParameterError.exit_code

    text = res.text if cfg.output.format == "csv" else _json_text(res)
    out = args.out or cfg.output.path
    if out:
        Path(out).write_text(text)
        for suffix, body in res.extra_files.items():
            Path(f"{out}.{suffix}").write_text(body)
        record = {
            "version": artifact_version(),
            "command": args.command,
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "threads": threads,
            "elapsed_seconds": time.perf_counter() - start,
            "results": res.results,
            "diagnostics": res.diagnostics,
        }
        Path(f"{out}.record.json").write_text(json.dumps(record, indent=2, sort_keys=True, default=_jsonable) + "\n")
        print(res.summary)
    else:
        sys.stdout.write(text)
        for suffix, body in res.extra_files.items():
            sys.stdout.write(f"# {suffix}\n{body}")
        print(res.summary, file=sys.stderr)
    if res.failed_verification:
        print(f"warning: {res.failed_verification}", file=sys.stderr)
    return 0


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
