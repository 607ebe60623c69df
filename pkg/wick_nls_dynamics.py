# wick_nls_dynamics.py
"""
NLS cubique tronquée, ordonnée de Wick, sur T², et sa forme équivalente par jauge.

    i u_t + Δu = P_N{(|P_N u|² − 2σ_N) P_N u}          (non jaugée)
    i v_t + Δv = P_N{(|P_N v|² − 2‖P_N v‖²) P_N v}     (jaugée)

Les deux flots sont intégrés en représentation d'interaction: le propagateur
linéaire e^{−it|n|²} est appliqué exactement, la non-linéarité avance par un pas
de Lawson RK4. Elle ne touche que |n| ≤ N: les modes hauts évoluent linéairement.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

import config
from gibbs_sampler import (
    effective_sample_size,
    sigma,
    wick_quartic_integrals,
    weighted_sample_batch,
    sample_mu_batch,
    sample_seeds,
)
from spectral_core import (
    FourierField,
    ProjectorMode,
    RadiusMismatchError,
    coeffs_from_physical,
    disc_mask,
    hs_norm,
    l2_norm,
    linear_flow,
    physical_from_coeffs,
    physical_grid_size,
    project,
    squared_modulus,
)
from utils import bootstrap_indices, derive_seed, is_dyadic, logger


class StepRejectedError(RuntimeError):
    """L'intégrateur n'a pas tenu sa tolérance de dérive; le calcul est instable."""


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class NlsState:
    field: FourierField
    truncation_N: int
    time: float = 0.0

    def __post_init__(self):
        if not is_dyadic(self.truncation_N):
            raise ValueError(f"truncation_N must be dyadic, got {self.truncation_N}")
        if self.truncation_N > self.field.grid_radius:
            raise ValueError(
                f"truncation_N={self.truncation_N} exceeds grid radius {self.field.grid_radius}"
            )


@dataclass(frozen=True)
class IntegratorConfig:
    """Pas d'enregistrement dt, découpé en sous-pas h avec h·(2N)² ≤ BEAT_BOUND."""

    dt: float
    scheme: str = "ifrk4"
    tolerance: float = config.INTEGRATOR_TOLERANCE
    max_refinements: int = config.MAX_STEP_REFINEMENTS

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.scheme != "ifrk4":
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def substeps_for(self, N: int, step: Optional[float] = None) -> int:
        step = abs(step if step is not None else self.dt)
        return max(1, math.ceil(step * (2 * N) ** 2 / config.BEAT_BOUND - 1e-12))


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    final: FourierField
    snapshots: Optional[Tuple[FourierField, ...]] = None
    substeps: int = 1

    def max_relative_drift(self) -> Dict[str, float]:
        def rel(values):
            ref = abs(values[0])
            if ref == 0.0:
                return float(np.max(np.abs(values - values[0])))
            return float(np.max(np.abs(values - values[0])) / ref)

        return {"mass": rel(self.mass), "energy": rel(self.energy)}


@dataclass(frozen=True, eq=False)
class ResidualCurve:
    times: np.ndarray
    norms: np.ndarray
    s: float


# ============================================================================
# TRILINEAR OPERATORS
# ============================================================================

def _common_radius(*fields: FourierField) -> int:
    radii = {f.grid_radius for f in fields}
    if len(radii) != 1:
        raise RadiusMismatchError(f"trilinear inputs have radii {sorted(radii)}")
    return radii.pop()


def _inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Σ_n a(n) conj(b(n)) sur les deux derniers axes."""
    return np.sum(a * np.conj(b), axis=(-2, -1))


def full_trilinear(a1: np.ndarray, a2: np.ndarray, a3: np.ndarray, radius: int) -> np.ndarray:
    """Σ_{n = n1 − n2 + n3} a1(n1) conj(a2(n2)) a3(n3), tronqué à |n| ≤ radius."""
    M = physical_grid_size(radius)
    p1 = physical_from_coeffs(a1, radius, M)
    p2 = physical_from_coeffs(a2, radius, M)
    p3 = physical_from_coeffs(a3, radius, M)
    return coeffs_from_physical(p1 * np.conj(p2) * p3, radius)


def nonres_arrays(a1: np.ndarray, a2: np.ndarray, a3: np.ndarray, radius: int) -> np.ndarray:
    full = full_trilinear(a1, a2, a3, radius)
    # retire n = n1 (n2 = n3) et n = n3 (n1 = n2); la diagonale est retirée deux fois
    ip32 = _inner(a3, a2)[..., None, None]
    ip12 = _inner(a1, a2)[..., None, None]
    return full - a1 * ip32 - a3 * ip12 + a1 * np.conj(a2) * a3


def nonres_trilinear(v1: FourierField, v2: FourierField, v3: FourierField) -> FourierField:
    """N(v1, v2, v3) avec les exclusions n ≠ n1 et n ≠ n3."""
    R = _common_radius(v1, v2, v3)
    return FourierField(R, nonres_arrays(v1.coeffs, v2.coeffs, v3.coeffs, R))


def res_trilinear(v1: FourierField, v2: FourierField, v3: FourierField) -> FourierField:
    R = _common_radius(v1, v2, v3)
    return FourierField(R, v1.coeffs * np.conj(v2.coeffs) * v3.coeffs)


def renorm_nonlinearity(v: FourierField) -> FourierField:
    """𝔑(v) = N(v,v,v) − R(v,v,v) = (|v|² − 2∫|v|²) v."""
    return nonres_trilinear(v, v, v) - res_trilinear(v, v, v)


# ============================================================================
# RIGHT-HAND SIDE
# ============================================================================

def low_block(u: np.ndarray, N: int, radius: int) -> np.ndarray:
    """P_N u recentré sur une grille de rayon N."""
    c = radius
    sub = u[..., c - N:c + N + 1, c - N:c + N + 1]
    return np.where(disc_mask(N), sub, 0.0)


def _cubic_low(low: np.ndarray, N: int, shift) -> np.ndarray:
    """P_N{(|w|² − 2·shift) w} pour w = P_N u donné sur la grille de rayon N."""
    M = physical_grid_size(N)
    w = physical_from_coeffs(low, N, M)
    shift = np.asarray(shift, dtype=float)[..., None, None]
    return coeffs_from_physical((np.abs(w) ** 2 - 2.0 * shift) * w, N)


def _forcing(u: np.ndarray, N: int, radius: int, gauged: bool, sigma_value: float) -> np.ndarray:
    """−i·P_N{...} sur la grille complète; nul pour |n| > N."""
    low = low_block(u, N, radius)
    shift = np.sum(np.abs(low) ** 2, axis=(-2, -1)) if gauged else sigma_value
    out = np.zeros_like(u)
    out[..., radius - N:radius + N + 1, radius - N:radius + N + 1] = -1j * _cubic_low(low, N, shift)
    return out


def rhs(state: NlsState, gauged: bool, sigma_override: Optional[float] = None) -> FourierField:
    N, R = state.truncation_N, state.field.grid_radius
    s = sigma(N).sigma_N if sigma_override is None else sigma_override
    return FourierField(R, _forcing(state.field.coeffs, N, R, gauged, s))


# ============================================================================
# GAUGE
# ============================================================================

def alpha_constant(state0: NlsState) -> float:
    """α = ‖P_N u(0)‖² − σ_N."""
    low = project(state0.field, ProjectorMode.LEQ, state0.truncation_N)
    return l2_norm(low) ** 2 - sigma(state0.truncation_N).sigma_N


def gauge_transform(u: FourierField, t: float, alpha: float, N: int) -> FourierField:
    """e^{2itα} P_N u + P_N^⊥ u."""
    mask = squared_modulus(u.grid_radius) <= N * N
    phase = np.exp(2j * t * alpha)
    return FourierField(u.grid_radius, np.where(mask, phase * u.coeffs, u.coeffs))


# ============================================================================
# CONSERVED QUANTITIES
# ============================================================================

def mass(u: FourierField) -> float:
    return l2_norm(u) ** 2


def _mass_arrays(u: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(u) ** 2, axis=(-2, -1))


def _energy_arrays(u: np.ndarray, N: int, radius: int, sigma_value: float) -> np.ndarray:
    kinetic = 0.5 * np.sum(squared_modulus(radius) * np.abs(u) ** 2, axis=(-2, -1))
    low = low_block(u, N, radius)
    flat = low.reshape((-1,) + low.shape[-2:])
    quartic = wick_quartic_integrals(flat, N, sigma_value).reshape(low.shape[:-2])
    return kinetic + 0.25 * quartic


def wick_energy(u: FourierField, N: int, sigma_value: Optional[float] = None) -> float:
    """½∫|∇u|² + ¼∫:|P_N u|⁴:."""
    s = sigma(N).sigma_N if sigma_value is None else sigma_value
    return float(_energy_arrays(u.coeffs, N, u.grid_radius, s))


# ============================================================================
# INTEGRATOR
# ============================================================================

class _LawsonStepper:
    """RK4 en représentation d'interaction sur des coefficients empilés."""

    def __init__(self, N: int, radius: int, gauged: bool, sigma_value: float):
        self.N = N
        self.radius = radius
        self.gauged = gauged
        self.sigma_value = sigma_value
        self._k2 = squared_modulus(radius)
        self._h = None

    def _prepare(self, h: float) -> None:
        if self._h != h:
            self._h = h
            self._half = np.exp(-0.5j * h * self._k2)
            self._full = np.exp(-1j * h * self._k2)

    def _G(self, u: np.ndarray) -> np.ndarray:
        return _forcing(u, self.N, self.radius, self.gauged, self.sigma_value)

    def step(self, u: np.ndarray, h: float) -> np.ndarray:
        self._prepare(h)
        E2, E = self._half, self._full
        k1 = h * self._G(u)
        k2 = h * self._G(E2 * (u + 0.5 * k1))
        k3 = h * self._G(E2 * u + 0.5 * k2)
        k4 = h * self._G(E * u + E2 * k3)
        return E * u + (E * k1 + 2.0 * E2 * (k2 + k3) + k4) / 6.0

    def invariants(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _mass_arrays(u), _energy_arrays(u, self.N, self.radius, self.sigma_value)


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    scale = np.maximum(np.abs(old), 1e-300)
    rel = np.abs(new - old) / scale
    rel = np.where(np.abs(old) == 0.0, np.abs(new - old), rel)
    return float(np.max(rel))


def _integrate(u0: np.ndarray, N: int, radius: int, t_end: float, cfg: IntegratorConfig,
               gauged: bool, sigma_value: float, keep_frames: bool):
    """Boucle commune à evolve et evolve_batch; raffine les sous-pas jusqu'à ce que la dérive tienne."""
    stepper = _LawsonStepper(N, radius, gauged, sigma_value)
    n_records = int(math.ceil(abs(t_end) / cfg.dt - 1e-9)) if t_end != 0 else 0
    record_step = t_end / n_records if n_records else 0.0
    substeps = cfg.substeps_for(N, record_step) if n_records else 1

    u = np.array(u0, dtype=np.complex128)
    m0, e0 = stepper.invariants(u)
    times = [0.0]
    masses, energies = [m0], [e0]
    frames = [u.copy()] if keep_frames else None

    for i in range(n_records):
        refinements = 0
        while True:
            h = record_step / substeps
            trial = u
            for _ in range(substeps):
                trial = stepper.step(trial, h)
            m1, e1 = stepper.invariants(trial)
            drift = max(_relative_change(m1, masses[-1]), _relative_change(e1, energies[-1]))
            if drift <= cfg.tolerance * abs(record_step):
                break
            refinements += 1
            if refinements > cfg.max_refinements:
                raise StepRejectedError(
                    f"drift {drift:.3e} above {cfg.tolerance * abs(record_step):.3e} at "
                    f"t={times[-1]:.6g} after {cfg.max_refinements} refinements (N={N})"
                )
            substeps *= 2
            logger.debug(f"[NLS] step rejected at t={times[-1]:.6g}, substeps -> {substeps}")
        u = trial
        times.append((i + 1) * record_step)
        masses.append(m1)
        energies.append(e1)
        if keep_frames:
            frames.append(u.copy())

    return u, np.array(times), np.array(masses), np.array(energies), frames, substeps


def evolve(state: NlsState, t_end: float, cfg: IntegratorConfig, gauged: bool,
           sigma_override: Optional[float] = None, keep_snapshots: bool = False) -> TrajectoryRecord:
    """
    Intègre depuis state.time sur une durée t_end (t_end négatif remonte le temps).

    La masse ‖u‖² et l'énergie de Wick sont enregistrées à chaque pas
    d'enregistrement, avec le même σ que le flot (σ_N sauf surcharge).
    """
    N, R = state.truncation_N, state.field.grid_radius
    s = sigma(N).sigma_N if sigma_override is None else sigma_override
    u, times, masses, energies, frames, substeps = _integrate(
        state.field.coeffs, N, R, t_end, cfg, gauged, s, keep_snapshots
    )
    snaps = tuple(FourierField(R, f) for f in frames) if keep_snapshots else None
    return TrajectoryRecord(
        times=state.time + times,
        mass=masses,
        energy=energies,
        final=FourierField(R, u),
        snapshots=snaps,
        substeps=substeps,
    )


def evolve_batch(coeffs: np.ndarray, N: int, t_end: float, cfg: IntegratorConfig, gauged: bool,
                 sigma_override: Optional[float] = None) -> np.ndarray:
    """Fait évoluer des champs empilés (S, 2R+1, 2R+1) ensemble; renvoie les coefficients finaux."""
    radius = (coeffs.shape[-1] - 1) // 2
    s = sigma(N).sigma_N if sigma_override is None else sigma_override
    u, *_ = _integrate(coeffs, N, radius, t_end, cfg, gauged, s, False)
    return u


# ============================================================================
# GAUGE EQUIVALENCE AND RESIDUAL
# ============================================================================

def gauge_equivalence_check(u0: FourierField, N: int, t_end: float, cfg: IntegratorConfig) -> float:
    """sup_t ‖gauge(u(t)) − v(t)‖_{L²} entre les chemins non jaugé et jaugé."""
    state = NlsState(u0, N)
    alpha = alpha_constant(state)
    ungauged = evolve(state, t_end, cfg, gauged=False, keep_snapshots=True)
    gauged = evolve(state, t_end, cfg, gauged=True, keep_snapshots=True)
    worst = 0.0
    for t, u, v in zip(ungauged.times, ungauged.snapshots, gauged.snapshots):
        worst = max(worst, l2_norm(gauge_transform(u, t, alpha, N) - v))
    logger.info(f"[NLS] gauge discrepancy N={N} t_end={t_end}: {worst:.3e}")
    return worst


def residual_diagnostic(u0: FourierField, N: int, t_end: float, cfg: IntegratorConfig,
                        s: float) -> ResidualCurve:
    """‖v_N(t) − e^{itΔ}u0‖_{H^s} le long du flot jaugé."""
    if s <= 0:
        raise ValueError(f"residual regularity must be positive, got {s}")
    record = evolve(NlsState(u0, N), t_end, cfg, gauged=True, keep_snapshots=True)
    norms = np.array([
        hs_norm(v - linear_flow(u0, t), s) for t, v in zip(record.times, record.snapshots)
    ])
    return ResidualCurve(times=record.times, norms=norms, s=s)


# ============================================================================
# INVARIANCE HARNESS
# ============================================================================

OBSERVABLES = ("mass", "wick_quartic", "mode_re")


def observable_values(low: np.ndarray, N: int, name: str,
                      mode: Tuple[int, int] = config.MODE_OBSERVABLE) -> np.ndarray:
    if name == "mass":
        return _mass_arrays(low)
    if name == "wick_quartic":
        return wick_quartic_integrals(low, N)
    if name == "mode_re":
        return low[:, mode[0] + N, mode[1] + N].real
    raise ValueError(f"unknown observable {name!r}")


@dataclass
class InvarianceReport:
    N: int
    t_end: float
    n_samples: int
    seed: int
    control: bool
    ess: float
    status: str
    observables: Dict[str, Dict[str, float]] = field(default_factory=dict)

    @property
    def max_abs_z(self) -> float:
        return max((abs(v["z"]) for v in self.observables.values()), default=0.0)

    def to_dict(self) -> Dict:
        return {
            "N": self.N,
            "t_end": self.t_end,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "control": self.control,
            "ess": self.ess,
            "ess_fraction": self.ess / self.n_samples,
            "status": self.status,
            "observables": self.observables,
        }


def _weighted_moments(w: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Moyenne et variance pondérées sur le dernier axe; w n'a pas besoin d'être normalisé."""
    total = np.sum(w, axis=-1)
    mean = np.sum(w * x, axis=-1) / total
    var = np.sum(w * x * x, axis=-1) / total - mean * mean
    return mean, var


def _zscore(diff: float, se: float, floor: float) -> float:
    if abs(diff) <= floor or se == 0.0:
        return 0.0
    return diff / se


def compare_moments(x0: np.ndarray, x1: np.ndarray, log_weights: np.ndarray, seed: int,
                    tolerance_floor: float = 0.0,
                    resamples: int = config.BOOTSTRAP_RESAMPLES) -> Dict[str, float]:
    """Écarts de moyenne/variance pondérées entre échantillons appariés, z-scores par bootstrap."""
    w = np.exp(log_weights - np.max(log_weights))
    m0, v0 = _weighted_moments(w, x0)
    m1, v1 = _weighted_moments(w, x1)
    dmean, dvar = float(m1 - m0), float(v1 - v0)

    idx = bootstrap_indices(len(w), resamples, seed)
    boot_mean, boot_var = [], []
    for start in range(0, resamples, 100):
        sel = idx[start:start + 100]
        ws = w[sel]
        bm0, bv0 = _weighted_moments(ws, x0[sel])
        bm1, bv1 = _weighted_moments(ws, x1[sel])
        boot_mean.append(bm1 - bm0)
        boot_var.append(bv1 - bv0)
    se_mean = float(np.std(np.concatenate(boot_mean), ddof=1))
    se_var = float(np.std(np.concatenate(boot_var), ddof=1))

    mean_floor = tolerance_floor * float(np.mean(np.abs(x0)))
    var_floor = tolerance_floor * float(np.mean(x0 * x0))
    z_mean = _zscore(dmean, se_mean, mean_floor)
    z_var = _zscore(dvar, se_var, var_floor)
    return {
        "mean_diff": dmean,
        "mean_se": se_mean,
        "mean_z": z_mean,
        "var_diff": dvar,
        "var_se": se_var,
        "var_z": z_var,
        "z": z_mean if abs(z_mean) >= abs(z_var) else z_var,
    }


def invariance_test(N: int, t_end: float, observables: Sequence[str], n_samples: int, seed: int,
                    cfg: Optional[IntegratorConfig] = None, control: bool = False,
                    ess_floor: float = config.ESS_FLOOR, start: int = 0,
                    batch: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None) -> InvarianceReport:
    """
    Compare les moments pondérés des observables à t=0 et t=t_end sous le flot jaugé.

    Les échantillons sont des tirages de μ sur E_N repondérés vers ρ_N. Le témoin
    fait évoluer le flot non renormalisé (σ := 0) depuis μ seul (poids unitaires).
    `batch` permet de fournir des tableaux (initial, final, log_weights) déjà calculés.
    """
    for name in observables:
        if name not in OBSERVABLES:
            raise ValueError(f"unknown observable {name!r}; choose from {OBSERVABLES}")
    cfg = cfg or IntegratorConfig(dt=min(0.01, config.BEAT_BOUND / (2 * N) ** 2))

    if batch is None:
        batch = invariance_batch(N, t_end, n_samples, seed, cfg, control, start)
    initial, final, lw = batch

    ess = effective_sample_size(lw)
    results = {}
    floor = 10.0 * cfg.tolerance * abs(t_end)
    for name in observables:
        x0 = observable_values(initial, N, name)
        x1 = observable_values(final, N, name)
        results[name] = compare_moments(x0, x1, lw, derive_seed(seed, "bootstrap", name), floor)

    if ess / n_samples < ess_floor:
        status = "inconclusive"
    elif all(abs(r["z"]) < config.Z_THRESHOLD for r in results.values()):
        status = "pass"
    else:
        status = "fail"
    tag = "control" if control else "gibbs"
    logger.info(
        f"[INVARIANCE] {tag} N={N} t={t_end} samples={n_samples} ESS={ess:.1f} status={status}"
    )
    return InvarianceReport(N, t_end, n_samples, seed, control, ess, status, results)


def invariance_batch(N: int, t_end: float, n_samples: int, seed: int, cfg: IntegratorConfig,
                     control: bool = False, start: int = 0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tire un fragment d'échantillons et le fait évoluer; des `start` distincts donnent des fragments disjoints."""
    if control:
        initial = sample_mu_batch(N, sample_seeds(seed, n_samples, "mu", start))
        lw = np.zeros(n_samples)
        final = evolve_batch(initial, N, t_end, cfg, gauged=False, sigma_override=0.0)
    else:
        initial, lw = weighted_sample_batch(N, n_samples, seed, start)
        final = evolve_batch(initial, N, t_end, cfg, gauged=True)
    return initial, final, lw
