"""
main.py

Point d'entrée unique du laboratoire: chaque workflow de vérification ou de
simulation est une sous-commande, et `report` agrège toutes les vérifications
à échelle réduite.

Statut de sortie: 0 = pass, 1 = échec (ou erreur de domaine), 2 = inconclusif
(ESS trop faible) ou erreur d'usage.
"""

import argparse
import asyncio
import math
import sys
from concurrent.futures import Executor, ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import orjson

import config
from artifacts import resolved_config_dict, write_csv, write_json, write_snapshot
from gibbs_sampler import (
    GaussianEnsemble,
    effective_sample_size,
    gibbs_log_weight,
    mean_with_standard_error,
    partition_function_ratio_estimate,
    sample_mu,
    sample_seeds,
    sigma,
    weighted_sample_batch,
    wick_quartic_integrals,
)
from lattice_counting import (
    DyadicTuple,
    EnumerationCapError,
    divisor_sweep,
    dual_vector_bound_check,
    exclusion_counterexample,
    verify_counting_bounds,
)
from random_tensor_lab import (
    QuadratureResolutionError,
    RandomKernelSpec,
    VARIANTS,
    dominant_phase,
    moment_growth_check,
    resonant_term_norms,
    sandwich_bounds,
    stochastic_cubic_second_moment,
    stochastic_time_sweep,
    sweep_tuple,
    verify_rt_scaling,
)
from spectral_core import (
    FourierField,
    RadiusMismatchError,
    ResolutionError,
    SnapshotFormatError,
    UnrepresentableBlockError,
    ZeroDenominatorError,
    coeffs_from_physical,
    physical_from_coeffs,
    physical_grid_size,
    strichartz_sweep,
)
from tensor_norms import (
    BASE_PARTITIONS,
    AxisMismatchError,
    BaseTensorSpec,
    PowerIterationError,
    base_tensor,
    partition_norm,
    verify_base_tensor_bounds,
)
from utils import (
    attach_run_log,
    constant_growth,
    derive_seed,
    dyadic_range,
    growth_levels,
    is_dyadic,
    logger,
    loglog_slope,
    parse_int_list,
)
from wick_nls_dynamics import (
    OBSERVABLES,
    IntegratorConfig,
    NlsState,
    StepRejectedError,
    evolve,
    gauge_equivalence_check,
    invariance_batch,
    invariance_test,
    renorm_nonlinearity,
    residual_diagnostic,
)

EXIT_CODES = {"pass": 0, "fail": 1, "inconclusive": 2}

DOMAIN_ERRORS = (
    ResolutionError,
    UnrepresentableBlockError,
    RadiusMismatchError,
    ZeroDenominatorError,
    SnapshotFormatError,
    StepRejectedError,
    EnumerationCapError,
    PowerIterationError,
    AxisMismatchError,
    QuadratureResolutionError,
    ValueError,
)

# Commandes qui exigent --seed
STOCHASTIC_COMMANDS = (
    "sample", "evolve", "gauge-check", "invariance", "residual", "rt-mc", "stochastic-norm", "resonant",
)


class PoolError(RuntimeError):
    """Au moins une tâche du pool a échoué."""

    def __init__(self, failures: int, total: int):
        super().__init__(f"{failures} of {total} pool tasks failed")
        self.failures = failures
        self.total = total


def _status(passed: bool) -> str:
    return "pass" if passed else "fail"


def _worst(statuses: Iterable[str]) -> str:
    statuses = list(statuses)
    if "fail" in statuses:
        return "fail"
    if "inconclusive" in statuses:
        return "inconclusive"
    return "pass"


# ============================================================================ #
# WORKER POOL
# ============================================================================ #

def install_event_loop_policy() -> bool:
    """uvloop si disponible (Linux/Mac), sinon la boucle asyncio standard."""
    try:
        import uvloop
    except ImportError:
        return False
    asyncio.set_event_loop_policy(uvloop.EventLoopPolicy())
    return True


async def run_tasks(executor: Executor, fn: Callable, tasks: Sequence, limit: int) -> List[Any]:
    """
    Soumet les tâches à l'executor, au plus `limit` en vol.

    Les résultats reviennent dans l'ordre de soumission; une tâche en erreur
    renvoie son exception au lieu de faire tomber le lot.
    """
    loop = asyncio.get_running_loop()
    semaphore = asyncio.Semaphore(max(1, limit))

    async def one(task):
        async with semaphore:
            return await loop.run_in_executor(executor, fn, task)

    return await asyncio.gather(*(one(task) for task in tasks), return_exceptions=True)


class LabPool:
    """map ordonné sur un ProcessPoolExecutor; avec un seul worker tout tourne en ligne."""

    def __init__(self, workers: int):
        self.workers = max(1, int(workers))
        self._executor: Optional[ProcessPoolExecutor] = None

    def __enter__(self) -> "LabPool":
        if self.workers > 1:
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, *exc) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def map(self, fn: Callable, tasks: Iterable) -> List[Any]:
        tasks = list(tasks)
        if self._executor is None:
            return [fn(task) for task in tasks]
        results = asyncio.run(run_tasks(self._executor, fn, tasks, 2 * self.workers))
        failures = [(i, r) for i, r in enumerate(results) if isinstance(r, BaseException)]
        for i, exc in failures:
            logger.error(f"[POOL] task {i}/{len(tasks)} failed: {exc!r}")
        if failures:
            raise PoolError(len(failures), len(tasks))
        logger.debug(f"[POOL] {len(tasks)} tasks done on {self.workers} workers")
        return results


def _shards(total: int, size: int) -> List[Tuple[int, int]]:
    """(start, count) couvrant [0, total)."""
    return [(start, min(size, total - start)) for start in range(0, total, size)]


# Tâches du pool (niveau module pour rester picklables)

def _wick_shard(task: Tuple[int, int, int, int]) -> Tuple[np.ndarray, np.ndarray]:
    N, count, seed, start = task
    coeffs, lw = weighted_sample_batch(N, count, seed, start)
    return wick_quartic_integrals(coeffs, N), lw


def _gauge_task(task: Tuple[int, int, int, float, float]) -> float:
    seed, N, radius, t_end, dt = task
    u0 = sample_mu(radius, GaussianEnsemble.draw(seed, radius))
    return gauge_equivalence_check(u0, N, t_end, IntegratorConfig(dt=dt))


def _invariance_shard(task: Tuple[int, float, int, int, float, bool, int]):
    N, t_end, count, seed, dt, control, start = task
    return invariance_batch(N, t_end, count, seed, IntegratorConfig(dt=dt), control, start)


# ============================================================================ #
# CHECKS
# ============================================================================ #
# Chaque check renvoie un dict JSON-compatible avec un champ "status".

def _mu_field(seed: int, radius: int, label: str = "mu") -> FourierField:
    return sample_mu(radius, GaussianEnsemble.draw(sample_seeds(seed, 1, label)[0], radius))


def _default_dt(N: int) -> float:
    return min(0.01, config.BEAT_BOUND / (2 * N) ** 2)


def check_wick_mean(N: int, n_samples: int, seed: int, pool: LabPool) -> Dict[str, Any]:
    parts = pool.map(_wick_shard, [(N, c, seed, s) for s, c in _shards(n_samples, 10_000)])
    integrals = np.concatenate([p[0] for p in parts])
    lw = np.concatenate([p[1] for p in parts])
    mean, se = mean_with_standard_error(integrals)
    return {
        "N": N,
        "samples": n_samples,
        "sigma_N": sigma(N).sigma_N,
        "wick_quartic_mean": mean,
        "wick_quartic_se": se,
        "ess": effective_sample_size(lw),
        "status": _status(abs(mean) <= 3.0 * se),
    }


def check_sigma(N: int) -> Dict[str, Any]:
    s1, s2 = sigma(1).sigma_N, sigma(2).sigma_N
    gap = sigma(2 * N).sigma_N - sigma(N).sigma_N
    target = 2.0 * math.pi * math.log(2.0)
    rel = abs(gap - target) / target
    exact = abs(s1 - 3.0) <= 1e-12 and abs(s2 - 77.0 / 15.0) <= 1e-12
    return {
        "sigma_1": s1, "sigma_2": s2, "N": N, "gap": gap, "target": target, "relative_error": rel,
        "status": _status(exact and rel <= 0.02),
    }


def check_nonlinearity_identity(radius: int, n_fields: int, seed: int) -> Dict[str, Any]:
    """N − R contre (|v|² − 2∫|v|²)v calculé en espace physique."""
    M = physical_grid_size(radius)
    worst = 0.0
    for i in range(n_fields):
        v = _mu_field(derive_seed(seed, "identity", i), radius)
        spectral = renorm_nonlinearity(v).coeffs
        w = physical_from_coeffs(v.coeffs, radius, M)
        density = np.abs(w) ** 2
        physical = coeffs_from_physical((density - 2.0 * np.mean(density)) * w, radius)
        worst = max(worst, float(np.max(np.abs(spectral - physical))))
    return {"radius": radius, "fields": n_fields, "max_abs_error": worst,
            "status": _status(worst <= config.IDENTITY_TOLERANCE)}


def check_conservation(N: int, radius: int, t_end: float, dt: float, seed: int,
                       gauged: bool = True) -> Dict[str, Any]:
    u0 = _mu_field(seed, radius)
    cfg = IntegratorConfig(dt=dt)
    record = evolve(NlsState(u0, N), t_end, cfg, gauged=gauged)
    drift = record.max_relative_drift()
    allowed = cfg.tolerance * max(abs(t_end), dt)
    return {
        "N": N, "radius": radius, "t_end": t_end, "dt": dt, "gauged": gauged,
        "mass_drift": drift["mass"], "energy_drift": drift["energy"], "allowed": allowed,
        "substeps": record.substeps,
        "status": _status(max(drift.values()) <= allowed),
    }


def check_gauge(N: int, radius: int, t_end: float, dt: float, n_samples: int, seed: int,
                pool: LabPool) -> Dict[str, Any]:
    seeds = sample_seeds(seed, n_samples, "gauge")
    discrepancies = pool.map(_gauge_task, [(s, N, radius, t_end, dt) for s in seeds])
    worst = max(discrepancies)
    return {
        "N": N, "radius": radius, "t_end": t_end, "dt": dt,
        "discrepancies": discrepancies, "max": worst,
        "status": _status(worst <= config.GAUGE_TOLERANCE),
    }


def _invariance_report(N: int, t_end: float, n_samples: int, seed: int, dt: float, control: bool,
                       observables: Sequence[str], pool: LabPool):
    size = max(1, math.ceil(n_samples / (4 * pool.workers)))
    parts = pool.map(_invariance_shard, [
        (N, t_end, count, seed, dt, control, start) for start, count in _shards(n_samples, size)
    ])
    batch = tuple(np.concatenate([p[k] for p in parts]) for k in range(3))
    return invariance_test(N, t_end, observables, n_samples, seed, IntegratorConfig(dt=dt),
                           control=control, batch=batch)


def check_invariance(N: int, t_end: float, n_samples: int, seed: int, dt: float, with_control: bool,
                     observables: Sequence[str], pool: LabPool) -> Dict[str, Any]:
    gibbs = _invariance_report(N, t_end, n_samples, seed, dt, False, observables, pool)
    out = {"gibbs": gibbs.to_dict(), "status": gibbs.status}
    if with_control:
        control = _invariance_report(N, t_end, n_samples, seed, dt, True, observables, pool)
        detects = control.max_abs_z > config.Z_THRESHOLD
        out["control"] = control.to_dict()
        out["control_detects"] = detects
        if gibbs.status == "pass" and not detects:
            out["status"] = "fail"
    return out


def check_counting(max_n: int, eps: float, pool: LabPool):
    sweep = verify_counting_bounds(max_n, eps, map_fn=pool.map)
    identity_failures = [r.tuple.label() for r in sweep.reports if r.total != r.unconstrained]
    # N ∼ N1 ≫ N2 ∼ N3: sans exclusions le rapport au bound total croît avec N1
    small = exclusion_counterexample(DyadicTuple(8, 8, 2, 2), eps)
    large = exclusion_counterexample(DyadicTuple(16, 16, 2, 2), eps)
    growth_with = large["ratio_with"] / small["ratio_with"] if small["ratio_with"] > 0 else 0.0
    growth_without = large["ratio_without"] / small["ratio_without"]
    counter = {
        "small": small,
        "large": large,
        "growth_with": growth_with,
        "growth_without": growth_without,
        "violates_total_shape": growth_without > 1.25 and growth_without > growth_with,
    }
    levels = growth_levels(max_n, config.GROWTH_FLOOR_LEVEL)
    stability = constant_growth({L: sweep.constants_up_to(L) for L in levels}, config.CONSTANT_GROWTH_TOL)
    summary = {
        "max_n": max_n,
        "eps": eps,
        "tuples": len(sweep.reports),
        "constants": sweep.constants,
        "partition_identity_failures": identity_failures,
        "exclusion_counterexample": counter,
        "constant_stability": stability,
        "divisor_sweep": divisor_sweep(8 * max_n * max_n),
        "status": _status(not identity_failures and counter["violates_total_shape"] and stability["stable"]),
    }
    return sweep, summary


def _duality_residual(max_n: int) -> float:
    tup = sweep_tuple(max_n)
    h = base_tensor(BaseTensorSpec(tup, dominant_phase(tup)))
    worst = 0.0
    for p in BASE_PARTITIONS.values():
        a = partition_norm(h, p)
        b = partition_norm(h, p.dual())
        c = partition_norm(h.conj(), p)
        worst = max(worst, abs(a - b) / max(1.0, a), abs(a - c) / max(1.0, a))
    return worst


def check_tensor_bounds(max_n: int, eps: float, pool: LabPool):
    sweep = verify_base_tensor_bounds(max_n, eps, map_fn=pool.map)
    duality = _duality_residual(max_n)
    levels = growth_levels(max_n, config.GROWTH_FLOOR_LEVEL)
    stability = constant_growth({L: sweep.constants_up_to(L) for L in levels}, config.CONSTANT_GROWTH_TOL)
    summary = {
        "max_n": max_n,
        "eps": eps,
        "norms": len(sweep.rows),
        "constants": sweep.constants,
        "chain_violations": sweep.chain_violations,
        "duality_residual": duality,
        "constant_stability": stability,
        "status": _status(sweep.chain_violations == 0 and duality <= 1e-10 and stability["stable"]),
    }
    return sweep, summary


def check_rt_scaling(variant: str, sizes: Sequence[int], p: float, n_samples: int, seed: int, s: float,
                     moments: bool, pool: LabPool):
    report = verify_rt_scaling(variant, sizes, p, n_samples, seed, s, map_fn=pool.map)
    summary = {
        "variant": report.variant, "p": p, "s": s, "sizes": list(sizes), "samples": n_samples,
        "slope": report.slope, "exponent": report.exponent, "slack": report.slack,
        "slope_passed": report.passed,
    }
    passed = report.passed
    first = report.rows[0]
    spec = RandomKernelSpec(report.variant, sweep_tuple(first["size"]), first["m"], s)
    if p == 2:
        lower, upper = sandwich_bounds(spec)
        inside = (lower * (1.0 - config.SANDWICH_TOL) <= first["estimate"]
                  <= upper * (1.0 + config.SANDWICH_TOL))
        summary["sandwich"] = {"size": first["size"], "lower": lower, "upper": upper,
                               "estimate": first["estimate"], "inside": inside}
        passed &= inside
    if moments:
        growth = moment_growth_check(spec, (2, 4, 8), n_samples, seed)
        summary["moment_growth"] = growth
        passed &= growth["passed"]
    summary["status"] = _status(passed)
    return report, summary


def check_stochastic(tup: DyadicTuple, s: float, b_prime: float, T: float, n_samples: int, seed: int,
                     sweep_size: int, Ts: Sequence[float]) -> Dict[str, Any]:
    closed, mc = stochastic_cubic_second_moment(tup, s, b_prime, T, n_samples, seed)
    root = math.sqrt(closed)
    match = abs(mc.estimate - root) <= 3.0 * (mc.ci_hi - mc.ci_lo)
    sweep = stochastic_time_sweep(sweep_tuple(sweep_size), s, b_prime, Ts)
    slope_ok = config.STOCHASTIC_SLOPE_MIN <= sweep["slope"] <= config.STOCHASTIC_SLOPE_MAX
    return {
        "tuple": tup.label(), "s": s, "b_prime": b_prime, "T": T,
        "closed_form_second_moment": closed, "closed_form_norm": root,
        "mc": mc.to_dict(), "match": match,
        "t_sweep": sweep, "t_slope_in_range": slope_ok,
        "status": _status(match and slope_ok),
    }


def check_strichartz(levels: Sequence[int]) -> Tuple[List[Tuple[int, float]], Dict[str, Any]]:
    rows = strichartz_sweep(levels)
    ratios = [r for _, r in rows]
    slope = loglog_slope([N for N, _ in rows], ratios)
    monotone = all(b >= a - 1e-12 for a, b in zip(ratios, ratios[1:]))
    summary = {"levels": list(levels), "ratios": ratios, "slope": slope, "nondecreasing": monotone,
               "status": _status(monotone and slope < config.STRICHARTZ_GROWTH)}
    return rows, summary


def check_dual_bound(r: int, N: int, a1: float, trials: int, seed: int) -> Dict[str, Any]:
    ratio = dual_vector_bound_check(r, N, a1, trials, seed)
    return {"r": r, "N": N, "a1": a1, "trials": trials, "exponent": (r + 1) * a1,
            "max_ratio": ratio, "status": _status(ratio <= 1.0)}


# ============================================================================ #
# COMMANDS
# ============================================================================ #

def _resolved(args: argparse.Namespace) -> Dict[str, Any]:
    return resolved_config_dict(vars(args))


def _out(args: argparse.Namespace, name: str) -> Path:
    return Path(args.output) / name


def _b_prime(args: argparse.Namespace) -> float:
    return args.b_prime if args.b_prime is not None else 0.5 - 2.0 * args.eps


def cmd_sample(args, pool: LabPool) -> str:
    radius = args.radius or args.n
    result = check_wick_mean(args.n, args.samples, args.seed, pool)
    result["partition_function"] = [
        partition_function_ratio_estimate(args.n, size, args.seed) for size in args.z_sizes
    ]
    for i, s in enumerate(sample_seeds(args.seed, args.snapshots, "mu")):
        field = sample_mu(radius, GaussianEnsemble.draw(s, radius))
        write_snapshot(_out(args, f"sample_{i:04d}.field"), field, {
            "seed": args.seed, "index": i, "derived_seed": s, "N": args.n,
            "sigma_N": sigma(args.n).sigma_N, "log_weight": gibbs_log_weight(field, args.n),
        })
    write_json(_out(args, "sample.json"), result, _resolved(args))
    return result["status"]


def cmd_evolve(args, pool: LabPool) -> str:
    radius = args.radius or 3 * args.n
    u0 = _mu_field(args.seed, radius)
    cfg = IntegratorConfig(dt=args.dt)
    record = evolve(NlsState(u0, args.n), args.t, cfg, gauged=args.gauged, keep_snapshots=args.snapshots)
    resolved = _resolved(args)
    write_csv(_out(args, "evolve.csv"), ("time", "mass", "energy"),
              zip(record.times, record.mass, record.energy), resolved)
    if record.snapshots:
        for i, (t, frame) in enumerate(zip(record.times, record.snapshots)):
            write_snapshot(_out(args, f"evolve_{i:05d}.field"), frame,
                           {"seed": args.seed, "N": args.n, "time": float(t), "gauged": args.gauged})
    drift = record.max_relative_drift()
    allowed = cfg.tolerance * max(abs(args.t), args.dt)
    summary = {"mass_drift": drift["mass"], "energy_drift": drift["energy"], "allowed": allowed,
               "substeps": record.substeps, "status": _status(max(drift.values()) <= allowed)}
    write_json(_out(args, "evolve.json"), summary, resolved)
    logger.info(f"[NLS] drift mass={drift['mass']:.3e} energy={drift['energy']:.3e}")
    return summary["status"]


def cmd_gauge_check(args, pool: LabPool) -> str:
    radius = args.radius or 2 * args.n
    result = check_gauge(args.n, radius, args.t, args.dt, args.samples, args.seed, pool)
    write_json(_out(args, "gauge_check.json"), result, _resolved(args))
    return result["status"]


def cmd_invariance(args, pool: LabPool) -> str:
    dt = args.dt or _default_dt(args.n)
    result = check_invariance(args.n, args.t, args.samples, args.seed, dt, args.control,
                              args.observables, pool)
    write_json(_out(args, "invariance.json"), result, _resolved(args))
    return result["status"]


def cmd_residual(args, pool: LabPool) -> str:
    radius = args.radius or 2 * args.n
    u0 = _mu_field(args.seed, radius)
    curve = residual_diagnostic(u0, args.n, args.t, IntegratorConfig(dt=args.dt), args.s)
    write_csv(_out(args, "residual.csv"), ("time", "norm"), zip(curve.times, curve.norms), _resolved(args))
    return "pass"


def cmd_count(args, pool: LabPool) -> str:
    sweep, summary = check_counting(args.max_n, args.eps, pool)
    rows = (
        (*r.tuple.as_tuple(), bound_id, r.sections[bound_id], r.bounds[bound_id], r.ratios[bound_id])
        for r in sweep.reports for bound_id in r.bounds
    )
    resolved = _resolved(args)
    write_csv(_out(args, "count.csv"), ("N", "N1", "N2", "N3", "bound_id", "count", "bound", "ratio"),
              rows, resolved)
    write_json(_out(args, "count.json"), summary, resolved)
    return summary["status"]


def cmd_tensor_bounds(args, pool: LabPool) -> str:
    sweep, summary = check_tensor_bounds(args.max_n, args.eps, pool)
    rows = (
        (*r.tuple.as_tuple(), r.m, r.partition, r.exact, r.schur, r.counting, r.hilbert_schmidt, r.bound, r.ratio)
        for r in sweep.rows
    )
    header = ("N", "N1", "N2", "N3", "m", "partition", "exact", "schur", "counting",
              "hilbert_schmidt", "predicted_bound", "ratio")
    resolved = _resolved(args)
    write_csv(_out(args, "tensor_bounds.csv"), header, rows, resolved)
    write_json(_out(args, "tensor_bounds.json"), summary, resolved)
    return summary["status"]


def cmd_rt_mc(args, pool: LabPool) -> str:
    report, summary = check_rt_scaling(args.variant, args.sweep, args.p, args.samples, args.seed, args.s,
                                       args.moments, pool)
    header = ("size", "m", "estimate", "ci_lo", "ci_hi", "predicted_rhs", "ratio")
    resolved = _resolved(args)
    write_csv(_out(args, "rt_mc.csv"), header, ([r[k] for k in header] for r in report.rows), resolved)
    write_json(_out(args, "rt_mc.json"), summary, resolved)
    return summary["status"]


def cmd_stochastic_norm(args, pool: LabPool) -> str:
    tup = DyadicTuple(*args.tuple)
    result = check_stochastic(tup, args.s, _b_prime(args), args.T, args.samples, args.seed,
                              args.sweep_size, args.t_sweep)
    write_json(_out(args, "stochastic_norm.json"), result, _resolved(args))
    return result["status"]


def cmd_resonant(args, pool: LabPool) -> str:
    z = GaussianEnsemble.draw(derive_seed(args.seed, "resonant", "z"), args.radius)
    w0 = _mu_field(derive_seed(args.seed, "resonant", "w"), args.radius)
    norms = {
        case: resonant_term_norms(case, args.s, args.T, args.radius, ensemble=z, w0=w0, eps=args.eps)
        for case in ("www", "zzz", "wzz", "wwz")
    }
    write_json(_out(args, "resonant.json"), {"radius": args.radius, "norms": norms, "status": "pass"},
               _resolved(args))
    return "pass"


def cmd_strichartz(args, pool: LabPool) -> str:
    rows, summary = check_strichartz(args.levels)
    resolved = _resolved(args)
    write_csv(_out(args, "strichartz.csv"), ("N", "ratio"), rows, resolved)
    write_json(_out(args, "strichartz.json"), summary, resolved)
    return summary["status"]


def cmd_dual_bound(args, pool: LabPool) -> str:
    result = check_dual_bound(args.r, args.n, args.a1, args.trials, args.seed)
    write_json(_out(args, "dual_bound.json"), result, _resolved(args))
    return result["status"]


REPORT_SECTIONS = (
    "wick_mean", "sigma", "identity", "conservation", "gauge", "invariance", "counting",
    "tensor_bounds", "rt_h1", "rt_h3", "rt_generic", "stochastic", "strichartz", "dual_bound",
)


def _report_section(name: str, args, pool: LabPool) -> Dict[str, Any]:
    n, seed, max_n = args.samples, args.seed, args.max_n
    mc = max(config.MIN_MC_SAMPLES, n)
    sizes = [size for size in dyadic_range(max_n) if size >= 2] or [2]
    if name == "wick_mean":
        return check_wick_mean(8, 10 * n, seed, pool)
    if name == "sigma":
        return check_sigma(1024)
    if name == "identity":
        return check_nonlinearity_identity(8, 10, seed)
    if name == "conservation":
        return check_conservation(4, 12, 0.1, 1e-3, seed)
    if name == "gauge":
        return check_gauge(4, 8, 0.2, 1e-3, 2, seed, pool)
    if name == "invariance":
        return check_invariance(4, 0.2, n, seed, _default_dt(4), True, OBSERVABLES, pool)
    if name == "counting":
        return check_counting(max_n, config.COUNT_EPS, pool)[1]
    if name == "tensor_bounds":
        return check_tensor_bounds(min(max_n, config.BASE_TENSOR_CAP), config.COUNT_EPS, pool)[1]
    if name == "rt_h1":
        return check_rt_scaling("H1", sizes, 2.0, mc, seed, config.DEFAULT_S, False, pool)[1]
    if name == "rt_h3":
        return check_rt_scaling("H3", sizes, 2.0, mc, seed, config.DEFAULT_S, False, pool)[1]
    if name == "rt_generic":
        return check_rt_scaling("generic", sizes, 2.0, mc, seed, config.DEFAULT_S, True, pool)[1]
    if name == "stochastic":
        return check_stochastic(DyadicTuple(2, 2, 2, 2), config.DEFAULT_S, config.B_PRIME, config.DEFAULT_T,
                                mc, seed, max(4, min(8, max_n)), (1.0, 0.5, 0.25, 0.125))
    if name == "strichartz":
        return check_strichartz((4, 8, 16))[1]
    if name == "dual_bound":
        return check_dual_bound(2, 64, 2.0, n, seed)
    raise ValueError(f"unknown report section {name!r}")


def cmd_report(args, pool: LabPool) -> str:
    names = REPORT_SECTIONS if args.all or not args.checks else args.checks
    sections = {}
    for name in names:
        try:
            sections[name] = _report_section(name, args, pool)
        except DOMAIN_ERRORS + (PoolError,) as e:
            logger.error(f"[CLI] report section {name} failed: {e}")
            sections[name] = {"status": "fail", "error": f"{type(e).__name__}: {e}"}
        logger.info(f"[CLI] report {name}: {sections[name]['status']}")
    status = _worst(s["status"] for s in sections.values())
    write_json(_out(args, "report.json"), {"sections": sections, "status": status}, _resolved(args))
    return status


# ============================================================================ #
# ARGUMENTS
# ============================================================================ #

def _dyadic(text: str) -> int:
    value = int(text)
    if not is_dyadic(value):
        raise argparse.ArgumentTypeError(f"{value} is not a power of two")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{value} must be ≥ 1")
    return value


def _dyadic_list(text: str) -> List[int]:
    values = parse_int_list(text)
    if not values or not all(is_dyadic(v) for v in values):
        raise argparse.ArgumentTypeError(f"{text!r} must be a comma-separated list of powers of two")
    return values


def _float_list(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _name_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="wicklab", description="Wick-ordered NLS numerical laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    commands: Dict[str, argparse.ArgumentParser] = {}

    def add(name: str, handler: Callable, help_text: str, seed_default: Optional[int] = None):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--output", default=config.OUTPUT_DIR, help="dossier des artefacts")
        p.add_argument("--workers", type=_positive_int, default=config.LAB_WORKERS)
        p.add_argument("--config", default=None, help="fichier JSON fusionné (les flags gagnent)")
        p.add_argument("--seed", type=int, default=seed_default)
        p.set_defaults(func=handler)
        commands[name] = p
        return p

    p = add("sample", cmd_sample, "μ-samples, Wick mean-zero check and snapshots")
    p.add_argument("--n", type=_dyadic, default=8)
    p.add_argument("--radius", type=_positive_int, default=None)
    p.add_argument("--samples", type=_positive_int, default=100_000)
    p.add_argument("--snapshots", type=int, default=1)
    p.add_argument("--z-sizes", type=parse_int_list, default=[100, 1000])

    p = add("evolve", cmd_evolve, "truncated Wick NLS flow of one μ-sample")
    p.add_argument("--n", type=_dyadic, default=16)
    p.add_argument("--radius", type=_positive_int, default=None)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--gauged", action="store_true")
    p.add_argument("--snapshots", action="store_true")

    p = add("gauge-check", cmd_gauge_check, "gauged vs ungauged paths")
    p.add_argument("--n", type=_dyadic, default=8)
    p.add_argument("--radius", type=_positive_int, default=None)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--samples", type=_positive_int, default=10)

    p = add("invariance", cmd_invariance, "statistical Gibbs invariance test")
    p.add_argument("--n", type=_dyadic, default=4)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--samples", type=_positive_int, default=10_000)
    p.add_argument("--control", action="store_true", help="also run the broken control (σ = 0, μ-weights)")
    p.add_argument("--observables", type=_name_list, default=list(OBSERVABLES))

    p = add("residual", cmd_residual, "H^s norm of the residual along the gauged flow")
    p.add_argument("--n", type=_dyadic, default=8)
    p.add_argument("--radius", type=_positive_int, default=None)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--s", type=float, default=config.DEFAULT_S)

    p = add("count", cmd_count, "resonance counting bounds over dyadic tuples")
    p.add_argument("--max-n", type=_dyadic, default=config.ENUMERATION_CAP)
    p.add_argument("--eps", type=float, default=config.COUNT_EPS)

    p = add("tensor-bounds", cmd_tensor_bounds, "base-tensor partition norms")
    p.add_argument("--max-n", type=_dyadic, default=config.BASE_TENSOR_CAP)
    p.add_argument("--eps", type=float, default=config.COUNT_EPS)

    p = add("rt-mc", cmd_rt_mc, "Monte Carlo random-tensor scaling sweep")
    p.add_argument("--variant", type=str.lower, default="h1",
                   choices=[v.lower() for v in VARIANTS])
    p.add_argument("--sweep", type=_dyadic_list, default=[2, 4, 8, 16])
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.add_argument("--s", type=float, default=config.DEFAULT_S)
    p.add_argument("--moments", action="store_true", help="moment growth at p = 2, 4, 8")

    p = add("stochastic-norm", cmd_stochastic_norm, "second moment of the purely stochastic cubic term")
    p.add_argument("--tuple", type=_dyadic_list, default=[2, 2, 2, 2])
    p.add_argument("--T", type=float, default=config.DEFAULT_T)
    p.add_argument("--s", type=float, default=config.DEFAULT_S)
    p.add_argument("--eps", type=float, default=config.EPS)
    p.add_argument("--b-prime", type=float, default=None)
    p.add_argument("--samples", type=_positive_int, default=200)
    p.add_argument("--sweep-size", type=_dyadic, default=8)
    p.add_argument("--t-sweep", type=_float_list, default=[1.0, 0.5, 0.25, 0.125])

    p = add("resonant", cmd_resonant, "X^{s,b} norms of the resonant term")
    p.add_argument("--radius", type=_positive_int, default=8)
    p.add_argument("--T", type=float, default=config.DEFAULT_T)
    p.add_argument("--s", type=float, default=config.DEFAULT_S)
    p.add_argument("--eps", type=float, default=config.EPS)

    p = add("strichartz", cmd_strichartz, "L⁴ Strichartz ratio growth")
    p.add_argument("--levels", type=_dyadic_list, default=[4, 8, 16, 32])

    p = add("dual-bound", cmd_dual_bound, "small-rank dual-vector bound", seed_default=0)
    p.add_argument("--r", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--n", type=_positive_int, default=64)
    p.add_argument("--a1", type=float, default=2.0)
    p.add_argument("--trials", type=_positive_int, default=10_000)

    p = add("report", cmd_report, "every acceptance check at reduced scale", seed_default=0)
    p.add_argument("--all", action="store_true")
    p.add_argument("--checks", type=_name_list, default=None, help=f"subset of {','.join(REPORT_SECTIONS)}")
    p.add_argument("--max-n", type=_dyadic, default=4)
    p.add_argument("--samples", type=_positive_int, default=200)

    return parser, commands


def _load_config_file(path: str, parser: argparse.ArgumentParser) -> Dict[str, Any]:
    try:
        data = orjson.loads(Path(path).read_bytes())
    except (OSError, orjson.JSONDecodeError) as e:
        parser.error(f"--config: cannot read {path}: {e}")
    if not isinstance(data, dict):
        parser.error(f"--config: {path} must hold a JSON object")
    return {key.replace("-", "_"): value for key, value in data.items()}


def _validate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Contrôles qui s'appliquent aussi aux valeurs venues du fichier JSON."""
    for key in ("n", "max_n", "sweep_size"):
        value = getattr(args, key, None)
        if value is not None and not is_dyadic(value):
            parser.error(f"{key}: {value} is not a power of two")
    for key in ("samples", "trials", "radius"):
        value = getattr(args, key, None)
        if value is not None and (not isinstance(value, int) or value < 1):
            parser.error(f"{key}: {value} must be a positive integer")
    for key in ("dt", "T"):
        value = getattr(args, key, None)
        if value is not None and not value > 0:
            parser.error(f"{key}: {value} must be positive")
    if getattr(args, "tuple", None) is not None and len(args.tuple) != 4:
        parser.error(f"tuple: expected four dyadic sizes, got {args.tuple}")
    if getattr(args, "observables", None) is not None:
        unknown = [o for o in args.observables if o not in OBSERVABLES]
        if unknown:
            parser.error(f"observables: unknown {unknown}; choose from {OBSERVABLES}")
    if getattr(args, "checks", None):
        unknown = [c for c in args.checks if c not in REPORT_SECTIONS]
        if unknown:
            parser.error(f"checks: unknown {unknown}; choose from {REPORT_SECTIONS}")


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Flags > fichier --config > valeurs par défaut."""
    parser, commands = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        overrides = _load_config_file(args.config, parser)
        known = set(vars(args)) - {"func", "command", "config"}
        unknown = sorted(set(overrides) - known)
        if unknown:
            parser.error(f"--config: unknown field(s) {unknown} for {args.command}")
        commands[args.command].set_defaults(**overrides)
        args = parser.parse_args(argv)
    if args.command in STOCHASTIC_COMMANDS and args.seed is None:
        parser.error(f"--seed is required for {args.command}")
    _validate(args, parser)
    return args


# ============================================================================ #
# MAIN
# ============================================================================ #

def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    attach_run_log(args.output, args.command)
    if install_event_loop_policy():
        logger.debug("[POOL] uvloop event loop policy installed")
    logger.info(f"[CLI] {args.command} workers={args.workers} output={args.output}")
    try:
        with LabPool(args.workers) as pool:
            status = args.func(args, pool)
    except DOMAIN_ERRORS + (PoolError,) as e:
        logger.error(f"[CLI] {args.command} failed: {type(e).__name__}: {e}")
        return EXIT_CODES["fail"]
    logger.info(f"[CLI] {args.command}: {status}")
    return EXIT_CODES[status]


if __name__ == "__main__":
    sys.exit(main())
