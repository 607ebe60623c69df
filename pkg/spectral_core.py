# spectral_core.py
"""
Champs en fréquence sur le tore T² et normes déterministes associées.

Un FourierField stocke û(n) sur le carré |n|_∞ ≤ R, tout ce qui sort du disque
|n| ≤ R restant à zéro. L'espace physique utilise la mesure normalisée de T²:
les e_n(x) = e^{in·x} sont unitaires et Plancherel est exact:

    u(x_j) = M² · ifft2(û),    û = fft2(u) / M²,    ∫ f dx = moyenne sur la grille

Avec M = next_fast_len(4R + 1), les intégrales quartiques et les produits
cubiques sont sans repliement sur le disque.
"""
import math
import struct
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft
from scipy.integrate import simpson

import config
from utils import is_dyadic, logger


# ============================================================================
# EXCEPTIONS
# ============================================================================

class ResolutionError(ValueError):
    """Grille en temps trop grossière pour les poids de modulation."""


class UnrepresentableBlockError(ValueError):
    """Le bloc dyadique ne tient pas dans la grille du champ."""


class RadiusMismatchError(ValueError):
    pass


class ZeroDenominatorError(ZeroDivisionError):
    pass


class SnapshotFormatError(ValueError):
    pass


# ============================================================================
# FREQUENCY LATTICE
# ============================================================================

@lru_cache(maxsize=None)
def frequency_grid(radius: int) -> Tuple[np.ndarray, np.ndarray]:
    """Coordonnées entières (n_x, n_y) du carré (2R+1)², indexation 'ij'."""
    k = np.arange(-radius, radius + 1)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    kx.setflags(write=False)
    ky.setflags(write=False)
    return kx, ky


@lru_cache(maxsize=None)
def squared_modulus(radius: int) -> np.ndarray:
    kx, ky = frequency_grid(radius)
    k2 = (kx * kx + ky * ky).astype(np.int64)
    k2.setflags(write=False)
    return k2


@lru_cache(maxsize=None)
def disc_mask(radius: int) -> np.ndarray:
    mask = squared_modulus(radius) <= radius * radius
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=None)
def japanese_bracket(radius: int) -> np.ndarray:
    """⟨n⟩ = (1 + |n|²)^{1/2} sur le carré."""
    br = np.sqrt(1.0 + squared_modulus(radius))
    br.setflags(write=False)
    return br


def dyadic_block_mask(radius: int, N: int) -> np.ndarray:
    """Q_1 est |n| ≤ 1; pour N ≥ 2, Q_N est N/2 < |n| ≤ N."""
    k2 = squared_modulus(radius)
    if N == 1:
        return k2 <= 1
    return (4 * k2 > N * N) & (k2 <= N * N)


def block_of(k2: np.ndarray, max_block: int) -> np.ndarray:
    """Étiquette dyadique N de chaque |n|² (plus petit N avec |n| ≤ N), 0 au-delà de max_block."""
    k2 = np.asarray(k2, dtype=np.int64)
    out = np.zeros(k2.shape, dtype=np.int64)
    N = max_block
    while N >= 1:
        out = np.where(k2 <= N * N, N, out)
        N //= 2
    return out


def block_points(N: int) -> np.ndarray:
    """Points du réseau dans Q_N, tableau entier (P, 2) en ordre lexicographique."""
    kx, ky = frequency_grid(N)
    mask = dyadic_block_mask(N, N)
    pts = np.stack([kx[mask], ky[mask]], axis=1).astype(np.int64)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    return pts[order]


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class FourierField:
    """Coefficients spectraux û(n) pour |n| ≤ grid_radius."""

    grid_radius: int
    coeffs: np.ndarray

    def __post_init__(self):
        R = int(self.grid_radius)
        if R < 1:
            raise ValueError(f"grid_radius must be positive, got {self.grid_radius}")
        arr = np.array(self.coeffs, dtype=np.complex128)
        if arr.shape != (2 * R + 1, 2 * R + 1):
            raise ValueError(f"coefficient array shape {arr.shape} does not match radius {R}")
        arr[~disc_mask(R)] = 0.0
        arr.setflags(write=False)
        object.__setattr__(self, "grid_radius", R)
        object.__setattr__(self, "coeffs", arr)

    def coefficient(self, n: Sequence[int]) -> complex:
        R = self.grid_radius
        i, j = int(n[0]) + R, int(n[1]) + R
        if not (0 <= i <= 2 * R and 0 <= j <= 2 * R):
            return 0j
        return complex(self.coeffs[i, j])

    def _check(self, other: "FourierField") -> None:
        if other.grid_radius != self.grid_radius:
            raise RadiusMismatchError(
                f"radius {self.grid_radius} vs {other.grid_radius}"
            )

    def __add__(self, other: "FourierField") -> "FourierField":
        self._check(other)
        return FourierField(self.grid_radius, self.coeffs + other.coeffs)

    def __sub__(self, other: "FourierField") -> "FourierField":
        self._check(other)
        return FourierField(self.grid_radius, self.coeffs - other.coeffs)

    def __mul__(self, scalar: complex) -> "FourierField":
        return FourierField(self.grid_radius, self.coeffs * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class XsbParams:
    s: float = config.DEFAULT_S
    b: float = config.B
    eps: float = config.EPS

    @classmethod
    def default(cls, s: float = config.DEFAULT_S, eps: float = config.EPS) -> "XsbParams":
        return cls(s=s, b=0.5 + eps, eps=eps)

    @property
    def b_prime(self) -> float:
        return 0.5 - 2.0 * self.eps


def bump(t: np.ndarray) -> np.ndarray:
    """η lisse, η ≡ 1 sur [−1, 1], support dans [−2, 2]."""
    a = np.abs(np.asarray(t, dtype=float))

    def psi(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos])
        return out

    num = psi(2.0 - a)
    den = num + psi(a - 1.0)
    return num / den


@dataclass(frozen=True, eq=False)
class TimeWindow:
    T: float
    eta_samples: np.ndarray

    @classmethod
    def on_grid(cls, T: float, times: np.ndarray) -> "TimeWindow":
        if T <= 0:
            raise ValueError(f"window scale must be positive, got {T}")
        eta = bump(np.asarray(times, dtype=float) / T)
        eta.setflags(write=False)
        return cls(T=float(T), eta_samples=eta)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Trames de coefficients sur une grille en temps uniforme, forme (K, 2R+1, 2R+1)."""

    times: np.ndarray
    values: np.ndarray
    grid_radius: int
    window: Optional[TimeWindow] = None

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=np.complex128)
        R = int(self.grid_radius)
        if times.ndim != 1 or len(times) < 2:
            raise ValueError("a space-time field needs at least two frames")
        steps = np.diff(times)
        if steps[0] <= 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("time grid must be uniform and increasing")
        if values.shape != (len(times), 2 * R + 1, 2 * R + 1):
            raise ValueError(f"values shape {values.shape} does not match {len(times)} frames at radius {R}")
        values[:, ~disc_mask(R)] = 0.0
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "grid_radius", R)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def frames(self) -> Tuple[FourierField, ...]:
        return tuple(FourierField(self.grid_radius, v) for v in self.values)

    @classmethod
    def from_frames(cls, times: Sequence[float], frames: Sequence[FourierField],
                    window: Optional[TimeWindow] = None) -> "SpaceTimeField":
        radii = {f.grid_radius for f in frames}
        if len(radii) != 1:
            raise RadiusMismatchError(f"frames have radii {sorted(radii)}")
        return cls(np.asarray(times), np.stack([f.coeffs for f in frames]), radii.pop(), window)


# ============================================================================
# CONSTRUCTORS AND PHYSICAL SPACE
# ============================================================================

def zeros(radius: int) -> FourierField:
    return FourierField(radius, np.zeros((2 * radius + 1, 2 * radius + 1), dtype=np.complex128))


def single_mode(radius: int, n: Sequence[int], amplitude: complex = 1.0) -> FourierField:
    arr = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=np.complex128)
    i, j = int(n[0]) + radius, int(n[1]) + radius
    if 0 <= i <= 2 * radius and 0 <= j <= 2 * radius:
        arr[i, j] = amplitude
    return FourierField(radius, arr)


def restrict_radius(f: FourierField, radius: int) -> FourierField:
    """Plonge dans (ou tronque à) un autre rayon de grille."""
    R = f.grid_radius
    out = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=np.complex128)
    r = min(R, radius)
    out[radius - r:radius + r + 1, radius - r:radius + r + 1] = \
        f.coeffs[R - r:R + r + 1, R - r:R + r + 1]
    return FourierField(radius, out)


def physical_grid_size(radius: int) -> int:
    return sfft.next_fast_len(4 * radius + 1)


def embed_coeffs(coeffs: np.ndarray, radius: int, M: int) -> np.ndarray:
    """Place des coefficients (..., 2R+1, 2R+1) dans l'ordre FFT (..., M, M)."""
    idx = np.arange(-radius, radius + 1) % M
    out = np.zeros(coeffs.shape[:-2] + (M, M), dtype=np.complex128)
    out[..., idx[:, None], idx[None, :]] = coeffs
    return out


def physical_from_coeffs(coeffs: np.ndarray, radius: int, M: Optional[int] = None) -> np.ndarray:
    M = M or physical_grid_size(radius)
    return sfft.ifft2(embed_coeffs(coeffs, radius, M), axes=(-2, -1)) * (M * M)


def coeffs_from_physical(values: np.ndarray, radius: int) -> np.ndarray:
    M = values.shape[-1]
    if M < 2 * radius + 1:
        raise ResolutionError(f"physical grid {M} cannot hold radius {radius}")
    spec = sfft.fft2(values, axes=(-2, -1)) / (M * M)
    idx = np.arange(-radius, radius + 1) % M
    out = spec[..., idx[:, None], idx[None, :]]
    return np.where(disc_mask(radius), out, 0.0)


def physical_values(f: FourierField, M: Optional[int] = None) -> np.ndarray:
    return physical_from_coeffs(f.coeffs, f.grid_radius, M)


def from_physical(values: np.ndarray, radius: int) -> FourierField:
    return FourierField(radius, coeffs_from_physical(np.asarray(values), radius))


# ============================================================================
# NORMS OF A SINGLE FIELD
# ============================================================================

def l2_norm(f: FourierField) -> float:
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))


def hs_norm(f: FourierField, s: float) -> float:
    w = japanese_bracket(f.grid_radius) ** (2.0 * s)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def physical_l2_norm(f: FourierField) -> float:
    u = physical_values(f)
    return float(np.sqrt(np.mean(np.abs(u) ** 2)))


# ============================================================================
# PROJECTORS AND LINEAR FLOW
# ============================================================================

class ProjectorMode(str, Enum):
    LEQ = "leq"
    DYADIC = "dyadic"
    LEQ_DYADIC = "leq-dyadic"
    COMPLEMENT = "complement"


def projector_mask(radius: int, mode: ProjectorMode, N: int) -> np.ndarray:
    mode = ProjectorMode(mode)
    if N < 1:
        raise ValueError(f"projector level must be ≥ 1, got {N}")
    if mode is ProjectorMode.LEQ:
        return squared_modulus(radius) <= N * N
    if not is_dyadic(N):
        raise ValueError(f"{mode.value} projector needs a dyadic level, got {N}")
    if mode is not ProjectorMode.COMPLEMENT and N > radius:
        raise UnrepresentableBlockError(f"block N={N} exceeds grid radius {radius}")
    if mode is ProjectorMode.DYADIC:
        return dyadic_block_mask(radius, N)
    union = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=bool)
    M = 1
    while M <= N:
        union |= dyadic_block_mask(radius, M)
        M *= 2
    if mode is ProjectorMode.LEQ_DYADIC:
        return union
    return ~union


def project(f: FourierField, mode, N: int) -> FourierField:
    """P_N (leq), Q_N (dyadic), S_N (leq-dyadic) ou S_N^⊥ (complement)."""
    mask = projector_mask(f.grid_radius, mode, N)
    return FourierField(f.grid_radius, np.where(mask, f.coeffs, 0.0))


def flow_multiplier(radius: int, t) -> np.ndarray:
    """e^{−it|n|²}, diffusé sur un axe de temps en tête quand t est un tableau."""
    t = np.asarray(t, dtype=float)
    k2 = squared_modulus(radius)
    return np.exp(-1j * t[..., None, None] * k2)


def linear_flow(f: FourierField, t: float) -> FourierField:
    return FourierField(f.grid_radius, f.coeffs * flow_multiplier(f.grid_radius, t))


# ============================================================================
# TIME GRIDS AND WINDOWED FIELDS
# ============================================================================

def time_grid(half_width: float, dt: float) -> np.ndarray:
    """Grille uniforme symétrique autour de 0 couvrant [−half_width, half_width]."""
    half = int(math.ceil(half_width / dt - 1e-12))
    return dt * np.arange(-half, half + 1, dtype=float)


def resolved_time_step(radius: int, T: float) -> float:
    """Pas dont le τ de Nyquist dépasse NYQUIST_FACTOR·R² plus la largeur du plateau."""
    return math.pi / (config.NYQUIST_FACTOR * radius * radius + 40.0 / T)


def windowed_flow(f: FourierField, T: float, dt: Optional[float] = None) -> SpaceTimeField:
    """η_T(t)·e^{itΔ}f sur la fenêtre prolongée [−4T, 4T]."""
    dt = dt or resolved_time_step(f.grid_radius, T)
    times = time_grid(config.WINDOW_PAD * T, dt)
    window = TimeWindow.on_grid(T, times)
    frames = f.coeffs[None] * flow_multiplier(f.grid_radius, times)
    frames *= window.eta_samples[:, None, None]
    return SpaceTimeField(times, frames, f.grid_radius, window)


def padded_length(n_frames: int, dt: float) -> int:
    target = max(2 * n_frames, int(math.ceil((n_frames * dt + config.XSB_PAD_DURATION) / dt)))
    return sfft.next_fast_len(target)


# ============================================================================
# SPACE-TIME NORMS
# ============================================================================

def xsb_norm(u: SpaceTimeField, params: XsbParams) -> float:
    """
    ‖⟨n⟩^s ⟨τ+|n|²⟩^b ũ(n,τ)‖ sur le réseau discret (n, τ).

    ũ vaut dt/√(2π) fois la FFT des trames complétées par des zéros; l'intégrale
    en τ est la somme de Riemann de pas dτ = 2π/(P·dt), si bien que s = b = 0
    redonne exactement la norme L²_{x,t} discrète.
    """
    R = u.grid_radius
    dt = u.dt
    if math.pi / dt < 4 * R * R:
        raise ResolutionError(
            f"Nyquist τ = {math.pi / dt:.4g} below 4R² = {4 * R * R} at radius {R}"
        )
    K = len(u.times)
    P = padded_length(K, dt)
    tau = 2.0 * math.pi * sfft.fftfreq(P, dt)
    dtau = 2.0 * math.pi / (P * dt)

    flat = u.values.reshape(K, -1)
    live = np.any(flat != 0, axis=0)
    if not np.any(live):
        return 0.0
    data = flat[:, live]
    k2 = squared_modulus(R).reshape(-1)[live].astype(float)
    spatial = japanese_bracket(R).reshape(-1)[live] ** (2.0 * params.s)

    total = 0.0
    chunk = max(1, int(4_000_000 // P))
    for start in range(0, data.shape[1], chunk):
        stop = start + chunk
        spec = sfft.fft(data[:, start:stop], n=P, axis=0) * (dt / math.sqrt(2.0 * math.pi))
        modulation = tau[:, None] + k2[None, start:stop]
        weight = (1.0 + modulation * modulation) ** params.b
        total += float(np.sum(spatial[None, start:stop] * weight * np.abs(spec) ** 2))
    return math.sqrt(total * dtau)


def _lp_profile(frames: np.ndarray, radius: int, p: float) -> np.ndarray:
    """∫|u(t)|^p dx par trame, trames de forme (K, 2R+1, 2R+1)."""
    M = physical_grid_size(radius)
    out = np.empty(frames.shape[0], dtype=float)
    chunk = max(1, int(2_000_000 // (M * M)))
    for start in range(0, frames.shape[0], chunk):
        vals = physical_from_coeffs(frames[start:start + chunk], radius, M)
        out[start:start + chunk] = np.mean(np.abs(vals) ** p, axis=(-2, -1))
    return out


def lp_spacetime_norm(u: SpaceTimeField, p: float) -> float:
    if not (1.0 <= p < math.inf):
        raise ValueError(f"p must be finite and ≥ 1, got {p}")
    profile = _lp_profile(u.values, u.grid_radius, p)
    return float(simpson(profile, x=u.times)) ** (1.0 / p)


def strichartz_ratio(f: FourierField, N: int, dt: Optional[float] = None) -> float:
    """‖e^{itΔ}P_N f‖_{L⁴([0,1]×T²)} / ‖P_N f‖_{L²}."""
    low = project(f, ProjectorMode.LEQ, N)
    denom = l2_norm(low)
    if denom == 0.0:
        raise ZeroDenominatorError(f"P_{N} f vanishes")
    # ∫|u(t)|⁴ dx est un polynôme trigonométrique en t de fréquences ≤ 2N²
    dt = dt or config.STRICHARTZ_PHASE_STEP / max(2.0 * N * N, 1.0)
    K = int(math.ceil(1.0 / dt))
    K += K % 2
    times = np.linspace(0.0, 1.0, K + 1)
    R = low.grid_radius
    profile = np.empty(len(times), dtype=float)
    chunk = 256
    for start in range(0, len(times), chunk):
        ts = times[start:start + chunk]
        frames = low.coeffs[None] * flow_multiplier(R, ts)
        profile[start:start + chunk] = _lp_profile(frames, R, 4.0)
    norm = float(simpson(profile, x=times)) ** 0.25
    return norm / denom


def strichartz_sweep(levels: Iterable[int]) -> List[Tuple[int, float]]:
    """Rapports pour f̂ ≡ 1 sur le disque, une ligne par niveau."""
    out = []
    for N in levels:
        f = FourierField(N, np.ones((2 * N + 1, 2 * N + 1)))
        ratio = strichartz_ratio(f, N)
        logger.info(f"[SPECTRAL] Strichartz ratio N={N}: {ratio:.6f}")
        out.append((N, ratio))
    return out


# ============================================================================
# BINARY SNAPSHOTS
# ============================================================================

_HEADER = struct.Struct("<i")


def field_to_bytes(f: FourierField) -> bytes:
    """grid_radius en little-endian, puis les paires complex64 (re, im) ligne par ligne."""
    return _HEADER.pack(f.grid_radius) + f.coeffs.astype("<c8").tobytes(order="C")


def field_from_bytes(blob: bytes) -> FourierField:
    if len(blob) < _HEADER.size:
        raise SnapshotFormatError("snapshot shorter than its header")
    (R,) = _HEADER.unpack_from(blob)
    side = 2 * R + 1
    expected = _HEADER.size + side * side * 8
    if R < 1 or len(blob) != expected:
        raise SnapshotFormatError(f"snapshot of {len(blob)} bytes does not match radius {R}")
    arr = np.frombuffer(blob, dtype="<c8", offset=_HEADER.size).reshape(side, side)
    return FourierField(R, arr.astype(np.complex128))
