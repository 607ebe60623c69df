# gibbs_sampler.py
"""
Échantillonnage du champ libre gaussien, constantes et puissances de Wick, poids de Gibbs tronqués.

Les échantillons de μ sont û(n) = g_n/⟨n⟩ avec g_n gaussiennes complexes standard
(E|g_n|² = 1). La mesure de Gibbs tronquée ρ_N s'obtient par repondération
d'importance exp(−¼ ∫ :|P_N u|⁴: dx) ; l'ESS est toujours rapporté.
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import eval_hermitenorm

import config
from spectral_core import (
    FourierField,
    ProjectorMode,
    disc_mask,
    japanese_bracket,
    physical_from_coeffs,
    physical_grid_size,
    project,
    restrict_radius,
)
from utils import bootstrap_indices, derive_seed, logger, percentile_interval


# ============================================================================
# ENSEMBLES
# ============================================================================

@lru_cache(maxsize=None)
def _shell_order(radius: int) -> Tuple[np.ndarray, np.ndarray]:
    """Indices du carré rangés par couronne |n|_∞, puis dans l'ordre lexicographique."""
    k = np.arange(-radius, radius + 1)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    kx, ky = kx.ravel(), ky.ravel()
    shell = np.maximum(np.abs(kx), np.abs(ky))
    order = np.lexsort((ky, kx, shell))
    return kx[order] + radius, ky[order] + radius


@dataclass(frozen=True, eq=False)
class GaussianEnsemble:
    """
    {g_n : |n| ≤ grid_radius} tirées d'un flux Philox dans un ordre indépendant du rayon.

    Le flux parcourt les couronnes |n|_∞ = 0, 1, 2, ... : un ensemble de rayon R
    est la restriction de tout ensemble plus grand de même graine.
    """

    seed: int
    grid_radius: int
    g: np.ndarray

    @classmethod
    def draw(cls, seed: int, radius: int) -> "GaussianEnsemble":
        rng = np.random.Generator(np.random.Philox(int(seed)))
        ix, iy = _shell_order(radius)
        z = rng.standard_normal((len(ix), 2)) * math.sqrt(0.5)
        g = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=np.complex128)
        g[ix, iy] = z[:, 0] + 1j * z[:, 1]
        g[~disc_mask(radius)] = 0.0
        g.setflags(write=False)
        return cls(seed=int(seed), grid_radius=radius, g=g)

    @classmethod
    def degenerate(cls, radius: int) -> "GaussianEnsemble":
        """Tous les g_n = 0."""
        g = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=np.complex128)
        g.setflags(write=False)
        return cls(seed=-1, grid_radius=radius, g=g)

    def value(self, n: Sequence[int]) -> complex:
        R = self.grid_radius
        return complex(self.g[int(n[0]) + R, int(n[1]) + R])

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """g aux fréquences d'un tableau entier (..., 2) contenu dans la grille."""
        R = self.grid_radius
        return self.g[points[..., 0] + R, points[..., 1] + R]


def ensemble_batch(seeds: Sequence[int], radius: int) -> np.ndarray:
    return np.stack([GaussianEnsemble.draw(s, radius).g for s in seeds])


# ============================================================================
# SAMPLING μ
# ============================================================================

def sample_mu(radius: int, ensemble: GaussianEnsemble) -> FourierField:
    if ensemble.grid_radius < radius:
        raise ValueError(f"ensemble radius {ensemble.grid_radius} below requested {radius}")
    R = ensemble.grid_radius
    g = ensemble.g[R - radius:R + radius + 1, R - radius:R + radius + 1]
    return FourierField(radius, g / japanese_bracket(radius))


def sample_mu_batch(radius: int, seeds: Sequence[int]) -> np.ndarray:
    """Coefficients empilés d'échantillons de μ, forme (len(seeds), 2R+1, 2R+1)."""
    return ensemble_batch(seeds, radius) / japanese_bracket(radius)


def sample_seeds(seed: int, count: int, label: str = "mu", start: int = 0) -> List[int]:
    return [derive_seed(seed, label, i) for i in range(start, start + count)]


# ============================================================================
# WICK CONSTANTS AND POWERS
# ============================================================================

@dataclass(frozen=True)
class WickConstants:
    N: int
    sigma_N: float


@lru_cache(maxsize=None)
def _sigma_value(N: int) -> float:
    rows = []
    for x in range(-N, N + 1):
        m = math.isqrt(N * N - x * x)
        y = np.arange(-m, m + 1, dtype=np.float64)
        rows.append(float(np.sum(1.0 / (1.0 + x * x + y * y))))
    return math.fsum(rows)


def sigma(N: int) -> WickConstants:
    """σ_N = Σ_{|n|≤N} ⟨n⟩^{−2}."""
    if N < 1:
        raise ValueError(f"N must be ≥ 1, got {N}")
    return WickConstants(N=int(N), sigma_N=_sigma_value(int(N)))


def _low_modes(u: FourierField, N: int) -> np.ndarray:
    if N > u.grid_radius:
        raise ValueError(f"truncation N={N} exceeds grid radius {u.grid_radius}")
    low = project(u, ProjectorMode.LEQ, N)
    return restrict_radius(low, N).coeffs


def wick_quartic(u: FourierField, N: int) -> Tuple[np.ndarray, float]:
    """:|P_N u|⁴: = |P_N u|⁴ − 4σ_N|P_N u|² + 2σ_N² sur la grille physique, et son intégrale."""
    w = physical_from_coeffs(_low_modes(u, N), N)
    s = sigma(N).sigma_N
    a = np.abs(w) ** 2
    pointwise = a * a - 4.0 * s * a + 2.0 * s * s
    return pointwise, float(np.mean(pointwise))


def wick_quartic_hermite(u: FourierField, N: int) -> np.ndarray:
    """Même puissance de Wick via les polynômes d'Hermite réels de Re et Im (variance σ_N/2 chacun)."""
    w = physical_from_coeffs(_low_modes(u, N), N)
    c = sigma(N).sigma_N / 2.0
    rc = math.sqrt(c)

    def he(k, x):
        return c ** (k / 2.0) * eval_hermitenorm(k, x / rc)

    a, b = w.real, w.imag
    return he(4, a) + 2.0 * he(2, a) * he(2, b) + he(4, b)


def wick_quadratic(u: FourierField, N: int) -> float:
    """∫ :|P_N u|²: dx = ‖P_N u‖² − σ_N."""
    low = _low_modes(u, N)
    return float(np.sum(np.abs(low) ** 2)) - sigma(N).sigma_N


def wick_quartic_integrals(low_coeffs: np.ndarray, N: int, sigma_value: Optional[float] = None) -> np.ndarray:
    """Quartique de Wick intégrée pour des coefficients empilés de rayon N (S, 2N+1, 2N+1)."""
    s = sigma(N).sigma_N if sigma_value is None else sigma_value
    M = physical_grid_size(N)
    out = np.empty(low_coeffs.shape[0], dtype=float)
    chunk = max(1, int(2_000_000 // (M * M)))
    for start in range(0, low_coeffs.shape[0], chunk):
        a = np.abs(physical_from_coeffs(low_coeffs[start:start + chunk], N, M)) ** 2
        out[start:start + chunk] = np.mean(a * a - 4.0 * s * a + 2.0 * s * s, axis=(-2, -1))
    return out


# ============================================================================
# GIBBS WEIGHTS
# ============================================================================

@dataclass(frozen=True, eq=False)
class WeightedSample:
    field: FourierField
    log_weight: float

    def __post_init__(self):
        if not math.isfinite(self.log_weight):
            raise ValueError(f"log_weight must be finite, got {self.log_weight}")


def gibbs_log_weight(u: FourierField, N: int) -> float:
    """−¼ ∫ :|P_N u|⁴: dx."""
    _, integral = wick_quartic(u, N)
    return -0.25 * integral


def gibbs_log_weights(low_coeffs: np.ndarray, N: int) -> np.ndarray:
    return -0.25 * wick_quartic_integrals(low_coeffs, N)


def effective_sample_size(log_weights: Sequence[float]) -> float:
    """(Σw)²/Σw² pour w = exp(log_weights) normalisés par le plus grand poids."""
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0:
        raise ValueError("effective_sample_size needs at least one weight")
    finite = np.isfinite(lw)
    if not np.any(finite):
        raise ValueError("all weights are zero")
    w = np.zeros_like(lw)
    w[finite] = np.exp(lw[finite] - np.max(lw[finite]))
    return float(np.sum(w) ** 2 / np.sum(w * w))


def weighted_sample_batch(N: int, n_samples: int, seed: int, start: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Échantillons de μ sur E_N et leurs log-poids ρ_N, en tableaux empilés."""
    coeffs = sample_mu_batch(N, sample_seeds(seed, n_samples, "mu", start))
    return coeffs, gibbs_log_weights(coeffs, N)


def draw_weighted_samples(N: int, n_samples: int, seed: int) -> List[WeightedSample]:
    coeffs, lw = weighted_sample_batch(N, n_samples, seed)
    return [WeightedSample(FourierField(N, c), float(w)) for c, w in zip(coeffs, lw)]


# ============================================================================
# PROPERTY CHECKS
# ============================================================================

def gaussian_tail_frequency(radius: int, n_ensembles: int, threshold: float,
                            seed: int, exponent: float = 0.1) -> float:
    """Fraction des ensembles où max_n |g_n|/⟨n⟩^exponent dépasse le seuil."""
    scale = japanese_bracket(radius) ** exponent
    hits = 0
    for i in range(n_ensembles):
        ens = GaussianEnsemble.draw(derive_seed(seed, "tail", i), radius)
        if np.max(np.abs(ens.g) / scale) > threshold:
            hits += 1
    freq = hits / n_ensembles
    logger.info(f"[GIBBS] tail frequency radius={radius} threshold={threshold}: {freq:.4g}")
    return freq


def chaos_moment_ratio(N: int, n_samples: int, seed: int) -> float:
    """‖X‖_{L⁴}/‖X‖_{L²} pour la variable du second chaos X = ∫:|P_N u|²: dx."""
    coeffs = sample_mu_batch(N, sample_seeds(seed, n_samples, "chaos"))
    x = np.sum(np.abs(coeffs) ** 2, axis=(-2, -1)) - sigma(N).sigma_N
    l2 = math.sqrt(float(np.mean(x ** 2)))
    l4 = float(np.mean(x ** 4)) ** 0.25
    return l4 / l2


def mean_with_standard_error(values: np.ndarray) -> Tuple[float, float]:
    values = np.asarray(values, dtype=float)
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(len(values)))


def partition_function_ratio_estimate(N: int, n_samples: int, seed: int) -> Dict[str, float]:
    """E_μ[exp(−¼∫:|P_N u|⁴:)] avec un intervalle bootstrap."""
    _, lw = weighted_sample_batch(N, n_samples, seed)
    w = np.exp(lw)
    idx = bootstrap_indices(len(w), config.BOOTSTRAP_RESAMPLES, derive_seed(seed, "z-ratio"))
    lo, hi = percentile_interval(np.mean(w[idx], axis=1))
    est = float(np.mean(w))
    return {
        "samples": n_samples,
        "estimate": est,
        "ci_lo": min(lo, est),
        "ci_hi": max(hi, est),
        "ess": effective_sample_size(lw),
    }
