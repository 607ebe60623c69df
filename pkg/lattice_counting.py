# lattice_counting.py
"""
Comptage exhaustif des ensembles résonants S^{N,(m)} sur les blocs dyadiques.

Un quadruplet (n, n1, n2, n3) appartient à S^{N,(m)} si
    n = n1 − n2 + n3,   n ≠ n1,   n ≠ n3,   φ = |n|² − |n1|² + |n2|² − |n3|² = m
avec n ∈ Q_N, n1 ∈ Q_N1, n2 ∈ Q_N2, n3 ∈ Q_N3.

En posant d = n − n1 = n3 − n2 et e = n1 − n2 on a φ = 2 d·e ; les exclusions
reviennent à d ≠ 0 et e ≠ 0.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import correlate

import config
from spectral_core import block_of, block_points, disc_mask, dyadic_block_mask, frequency_grid
from utils import derive_seed, dyadic_range, is_dyadic, logger

SLOTS = ("n", "n1", "n2", "n3")
# n − n1 + n2 − n3 = 0
_SIGNS = (1, -1, 1, -1)


class EnumerationCapError(ValueError):
    """Le tuple demandé dépasse le plafond d'énumération."""


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class DyadicTuple:
    N: int
    N1: int
    N2: int
    N3: int

    def __post_init__(self):
        for name in ("N", "N1", "N2", "N3"):
            if not is_dyadic(getattr(self, name)):
                raise ValueError(f"{name} must be a power of two, got {getattr(self, name)}")

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.N, self.N1, self.N2, self.N3)

    @property
    def ordered(self) -> Tuple[int, int, int, int]:
        return tuple(sorted(self.as_tuple(), reverse=True))

    @property
    def n_max(self) -> int:
        return self.ordered[0]

    @property
    def n_med(self) -> int:
        return self.ordered[1]

    @property
    def n_min(self) -> int:
        return self.ordered[2]

    def swap13(self) -> "DyadicTuple":
        return DyadicTuple(self.N, self.N3, self.N2, self.N1)

    def label(self) -> str:
        return f"({self.N},{self.N1},{self.N2},{self.N3})"


@dataclass
class CountReport:
    tuple: DyadicTuple
    counts: Dict[int, int] = field(default_factory=dict)
    sections: Dict[str, int] = field(default_factory=dict)
    bounds: Dict[str, float] = field(default_factory=dict)
    unconstrained: int = 0

    @property
    def ratios(self) -> Dict[str, float]:
        return {k: self.sections[k] / self.bounds[k] for k in self.bounds}

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class CountingSweep:
    max_dyadic: int
    eps: float
    reports: List[CountReport]
    constants: Dict[str, float]

    def constants_up_to(self, level: int) -> Dict[str, float]:
        """Constantes ajustées restreintes aux tuples d'entrées ≤ level."""
        out = {bound_id: 0.0 for bound_id in self.constants}
        for report in self.reports:
            if report.tuple.n_max > level:
                continue
            for bound_id, ratio in report.ratios.items():
                out[bound_id] = max(out[bound_id], ratio)
        return out


# ============================================================================
# PHASE AND ENUMERATION
# ============================================================================

def phase_phi(n, n1, n2, n3) -> np.ndarray:
    """|n|² − |n1|² + |n2|² − |n3|² (diffusé sur les axes de tête)."""
    def sq(x):
        x = np.asarray(x, dtype=np.int64)
        return np.sum(x * x, axis=-1)

    return sq(n) - sq(n1) + sq(n2) - sq(n3)


def _check_cap(tup: DyadicTuple) -> None:
    if tup.n_max > config.ENUMERATION_CAP:
        raise EnumerationCapError(
            f"tuple {tup.label()} exceeds the enumeration cap {config.ENUMERATION_CAP}"
        )


def _block_quadruples(tup: DyadicTuple, exclusions: bool = True):
    """Produit (quadruplets, φ) pour chaque n, dans l'ordre lexicographique de (n, n1, n2)."""
    pn, p1, p2 = block_points(tup.N), block_points(tup.N1), block_points(tup.N2)
    i1, i2 = np.meshgrid(np.arange(len(p1)), np.arange(len(p2)), indexing="ij")
    x1, x2 = p1[i1.ravel()], p2[i2.ravel()]
    n3_block = tup.N3
    for n in pn:
        x3 = n - x1 + x2
        k3 = np.sum(x3 * x3, axis=1)
        keep = block_of(k3, n3_block) == n3_block
        if exclusions:
            keep &= np.any(x1 != n, axis=1) & np.any(x3 != n, axis=1)
        if not np.any(keep):
            continue
        a1, a2, a3 = x1[keep], x2[keep], x3[keep]
        a0 = np.broadcast_to(n, a1.shape)
        quads = np.stack([a0, a1, a2, a3], axis=1)
        yield quads, phase_phi(a0, a1, a2, a3)


def enumerate_S(tup: DyadicTuple, m: int, exclusions: bool = True) -> np.ndarray:
    """Tous les quadruplets de S^{N,(m)} en tableau entier (K, 4, 2), ordre lexicographique en (n, n1, n2)."""
    _check_cap(tup)
    parts = [q[phi == m] for q, phi in _block_quadruples(tup, exclusions)]
    parts = [p for p in parts if len(p)]
    if not parts:
        return np.zeros((0, 4, 2), dtype=np.int64)
    return np.concatenate(parts)


def phase_histogram(tup: DyadicTuple, exclusions: bool = True) -> Dict[int, int]:
    """m -> |S^{N,(m)}| pour chaque m atteint."""
    _check_cap(tup)
    counts: Dict[int, int] = {}
    for _, phi in _block_quadruples(tup, exclusions):
        values, cnt = np.unique(phi, return_counts=True)
        for v, c in zip(values.tolist(), cnt.tolist()):
            counts[v] = counts.get(v, 0) + c
    return dict(sorted(counts.items()))


def _slot_indices(fixed: Iterable[str]) -> List[int]:
    idx = []
    for name in fixed:
        if name not in SLOTS:
            raise ValueError(f"unknown slot {name!r}; choose from {SLOTS}")
        idx.append(SLOTS.index(name))
    return sorted(set(idx))


def _max_section(quads: np.ndarray, slots: List[int]):
    if len(quads) == 0:
        return 0, None
    if not slots:
        return len(quads), ()
    keys = quads[:, slots, :].reshape(len(quads), -1)
    uniq, cnt = np.unique(keys, axis=0, return_counts=True)
    best = int(np.argmax(cnt))
    section = tuple(tuple(int(v) for v in uniq[best][2 * i:2 * i + 2]) for i in range(len(slots)))
    return int(cnt[best]), section


def count_fixed(tup: DyadicTuple, m: int, fixed: Iterable[str]) -> Tuple[int, Optional[Tuple]]:
    """Plus grande section de S^{N,(m)} sur les valeurs des slots fixés, avec son argmax."""
    return _max_section(enumerate_S(tup, m), _slot_indices(fixed))


def max_section_size(quads: np.ndarray, fixed: Iterable[str]) -> int:
    return _max_section(quads, _slot_indices(fixed))[0]


def supports_by_phase(tup: DyadicTuple) -> Dict[int, np.ndarray]:
    """m -> S^{N,(m)} pour chaque m atteint, en un seul passage sur les blocs."""
    _check_cap(tup)
    chunks = list(_block_quadruples(tup))
    if not chunks:
        return {}
    quads = np.concatenate([q for q, _ in chunks])
    phi = np.concatenate([p for _, p in chunks])
    order = np.argsort(phi, kind="stable")
    quads, phi = quads[order], phi[order]
    values, starts = np.unique(phi, return_index=True)
    ends = list(starts[1:]) + [len(phi)]
    return {int(v): quads[a:b] for v, a, b in zip(values, starts, ends)}


def section_maxima(tup: DyadicTuple, m: int) -> Dict[str, int]:
    """Taille de la plus grande section pour chaque ensemble fixé de BOUNDS."""
    quads = enumerate_S(tup, m)
    return {
        bound_id: _max_section(quads, _slot_indices(fixed))[0]
        for bound_id, (fixed, _) in BOUNDS.items()
    }


# ============================================================================
# UNCONSTRAINED COUNT
# ============================================================================

def _block_indicator(radius: int, N: int) -> np.ndarray:
    return dyadic_block_mask(radius, N).astype(np.int64)


def unconstrained_count(tup: DyadicTuple) -> int:
    """
    #{n = n1 − n2 + n3 sur les blocs, n ≠ n1, n ≠ n3}, sans condition sur φ.

    Σ_d A(d)B(d) avec A(d) = #{n − n1 = d}, B(d) = #{n3 − n2 = d}, puis
    inclusion-exclusion sur d = 0 et e = 0.
    """
    R = tup.n_max
    q = {N: _block_indicator(R, N) for N in set(tup.as_tuple())}
    size = {N: int(q[N].sum()) for N in q}
    A = correlate(q[tup.N], q[tup.N1], mode="full", method="direct")
    B = correlate(q[tup.N3], q[tup.N2], mode="full", method="direct")
    total = int(np.sum(A * B))

    def inter(*blocks):
        return size[blocks[0]] if len(set(blocks)) == 1 else 0

    d_zero = inter(tup.N, tup.N1) * inter(tup.N2, tup.N3)
    e_zero = inter(tup.N, tup.N3) * inter(tup.N1, tup.N2)
    both = inter(tup.N, tup.N1, tup.N2, tup.N3)
    return total - d_zero - e_zero + both


# ============================================================================
# DIVISOR COUNTING
# ============================================================================

def _divisors(m: int) -> List[int]:
    m = abs(m)
    small, large = [], []
    a = 1
    while a * a <= m:
        if m % a == 0:
            small.append(a)
            if a * a != m:
                large.append(m // a)
        a += 1
    return small + large[::-1]


def divisor_pairs(m: int, a0: int, M: int, b0: int, Nb: int) -> int:
    """#{(a, b) ∈ Z² : ab = m, |a − a0| ≤ M, |b − b0| ≤ Nb} (fenêtres autour de a0, b0)."""
    if m == 0:
        raise ValueError("divisor_pairs needs m ≠ 0")
    count = 0
    for d in _divisors(m):
        for a in (d, -d):
            b = m // a
            if abs(a - a0) <= M and abs(b - b0) <= Nb:
                count += 1
    return count


def divisor_sweep(m_max: int, exponent: float = 0.1) -> Dict[str, float]:
    """max_{1 ≤ m ≤ m_max} (paires de diviseurs signés de m) / m^exponent, fenêtres illimitées."""
    tau = np.zeros(m_max + 1, dtype=np.int64)
    for a in range(1, m_max + 1):
        tau[a::a] += 1
    m = np.arange(1, m_max + 1)
    ratio = 2.0 * tau[1:] / m ** exponent
    best = int(np.argmax(ratio))
    return {"m_max": m_max, "exponent": exponent, "max_ratio": float(ratio[best]), "argmax": int(m[best])}


# ============================================================================
# BOUNDS
# ============================================================================

def _total_bound(t: DyadicTuple, e: float) -> float:
    return min(
        t.N1 ** 2 * t.N3 ** 2 * min(t.N, t.N2) ** e,
        t.N ** 2 * t.N2 ** 2 * min(t.N1, t.N3) ** e,
        min(t.N, t.N2) ** 2 * (t.N1 * t.N3) ** (1 + e),
        min(t.N1, t.N3) ** 2 * (t.N * t.N2) ** (1 + e),
    )


def _single_bound(lead: str, wedge: Tuple[str, str], pairs: Sequence[Tuple[str, str]]):
    def bound(t: DyadicTuple, e: float) -> float:
        g = lambda k: getattr(t, k)  # noqa: E731
        candidates = [g(lead) ** 2 * min(g(wedge[0]), g(wedge[1])) ** e]
        candidates += [(g(a) * g(b)) ** (1 + e) for a, b in pairs]
        return min(candidates)

    return bound


# id de borne -> (slots fixés, forme de la borne en fonction de (tuple, ε))
BOUNDS: Dict[str, Tuple[Tuple[str, ...], Callable[[DyadicTuple, float], float]]] = {
    "total": ((), _total_bound),
    "fix_n": (("n",), _single_bound("N2", ("N1", "N3"), [("N1", "N2"), ("N1", "N3"), ("N2", "N3")])),
    "fix_n1": (("n1",), _single_bound("N3", ("N", "N2"), [("N", "N2"), ("N", "N3"), ("N2", "N3")])),
    "fix_n2": (("n2",), _single_bound("N", ("N1", "N3"), [("N", "N1"), ("N", "N3"), ("N1", "N3")])),
    "fix_n3": (("n3",), _single_bound("N1", ("N", "N2"), [("N", "N1"), ("N", "N2"), ("N1", "N2")])),
    "fix_n_n1": (("n", "n1"), lambda t, e: min(t.N2, t.N3)),
    "fix_n_n2": (("n", "n2"), lambda t, e: min(t.N1, t.N3) ** e),
    "fix_n_n3": (("n", "n3"), lambda t, e: min(t.N1, t.N2)),
    "fix_n1_n2": (("n1", "n2"), lambda t, e: min(t.N, t.N3)),
    "fix_n1_n3": (("n1", "n3"), lambda t, e: min(t.N, t.N2) ** e),
    "fix_n2_n3": (("n2", "n3"), lambda t, e: min(t.N, t.N1)),
}


def _fixed_key(slots: Sequence[int]) -> str:
    return "fix_" + "_".join(SLOTS[s] for s in sorted(slots))


# ============================================================================
# SWEEP
# ============================================================================

def _disc_points(radius: int) -> np.ndarray:
    kx, ky = frequency_grid(radius)
    mask = disc_mask(radius)
    return np.stack([kx[mask], ky[mask]], axis=1).astype(np.int64)


def _levels(k2: np.ndarray, max_dyadic: int) -> np.ndarray:
    """Niveau dyadique log2(N) de chaque |n|², −1 au-delà de max_dyadic."""
    blk = block_of(k2, max_dyadic)
    lv = np.full(blk.shape, -1, dtype=np.int64)
    pos = blk > 0
    lv[pos] = np.round(np.log2(blk[pos])).astype(np.int64)
    return lv


def _section_pass(task: Tuple[int, int, int, int]) -> Dict[str, np.ndarray]:
    """
    Un fragment du sweep: boucle d'un slot sur une plage de points du disque,
    vectorisation sur deux slots libres, le quatrième vient de n − n1 + n2 − n3 = 0.

    Renvoie des tableaux par niveau: histogrammes de φ (slot n bouclé seulement),
    maxima de la section à un slot et de chaque section à deux slots contenant
    le slot bouclé et un slot suivant.
    """
    looped, max_dyadic, start, stop = task
    L = int(round(math.log2(max_dyadic))) + 1
    m_max = 8 * max_dyadic * max_dyadic
    Mr = 2 * m_max + 1
    off, width = 3 * max_dyadic, 6 * max_dyadic + 1

    pts = _disc_points(max_dyadic)
    lv_pts = _levels(np.sum(pts * pts, axis=1), max_dyadic)
    free_a, free_b, det = [s for s in range(4) if s != looped]
    ia, ib = np.meshgrid(np.arange(len(pts)), np.arange(len(pts)), indexing="ij")
    ia, ib = ia.ravel(), ib.ravel()

    out: Dict[str, np.ndarray] = {_fixed_key([looped]): np.zeros((L,) * 4, dtype=np.int64)}
    if looped == 0:
        out["histogram"] = np.zeros((L,) * 4 + (Mr,), dtype=np.int64)
    partners = [y for y in range(4) if y > looped]
    for y in partners:
        out[_fixed_key([looped, y])] = np.zeros((L,) * 4, dtype=np.int64)

    for k in range(start, stop):
        xl = pts[k]
        xa, xb = pts[ia], pts[ib]
        xd = -_SIGNS[det] * (_SIGNS[looped] * xl + _SIGNS[free_a] * xa + _SIGNS[free_b] * xb)
        lv_d = _levels(np.sum(xd * xd, axis=1), max_dyadic)

        coords: List[np.ndarray] = [None] * 4
        coords[looped] = np.broadcast_to(xl, xa.shape)
        coords[free_a], coords[free_b], coords[det] = xa, xb, xd
        keep = (lv_d >= 0) & np.any(coords[0] != coords[1], axis=1) & np.any(coords[0] != coords[3], axis=1)
        if not np.any(keep):
            continue
        coords = [c[keep] for c in coords]
        levels: List[np.ndarray] = [None] * 4
        levels[looped] = np.full(len(coords[0]), lv_pts[k])
        levels[free_a], levels[free_b], levels[det] = lv_pts[ia][keep], lv_pts[ib][keep], lv_d[keep]
        phi = phase_phi(*coords) + m_max

        key = (((levels[0] * L + levels[1]) * L + levels[2]) * L + levels[3]) * Mr + phi
        hist = np.bincount(key, minlength=L ** 4 * Mr).reshape((L,) * 4 + (Mr,))
        if looped == 0:
            out["histogram"] += hist
        name = _fixed_key([looped])
        out[name] = np.maximum(out[name], hist.max(axis=-1))

        for y in partners:
            o1, o2 = [s for s in range(4) if s not in (looped, y)]
            pos = (coords[y][:, 0] + off) * width + (coords[y][:, 1] + off)
            pair_key = ((pos * L + levels[o1]) * L + levels[o2]) * Mr + phi
            uniq, cnt = np.unique(pair_key, return_counts=True)
            rest = uniq // Mr
            lv_o2 = rest % L
            rest //= L
            lv_o1 = rest % L
            pos_u = rest // L
            cx, cy = pos_u // width - off, pos_u % width - off
            idx: List[np.ndarray] = [None] * 4
            idx[looped] = np.full(len(uniq), lv_pts[k])
            idx[y] = _levels(cx * cx + cy * cy, max_dyadic)
            idx[o1], idx[o2] = lv_o1, lv_o2
            np.maximum.at(out[_fixed_key([looped, y])], tuple(idx), cnt)
    return out


def _merge(parts: Iterable[Dict[str, np.ndarray]]) -> Dict[str, np.ndarray]:
    merged: Dict[str, np.ndarray] = {}
    for part in parts:
        for name, arr in part.items():
            if name not in merged:
                merged[name] = arr.copy()
            elif name == "histogram":
                merged[name] += arr
            else:
                merged[name] = np.maximum(merged[name], arr)
    return merged


def sweep_tasks(max_dyadic: int, shards: int = 8) -> List[Tuple[int, int, int, int]]:
    n_pts = len(_disc_points(max_dyadic))
    edges = np.linspace(0, n_pts, shards + 1).astype(int)
    return [
        (looped, max_dyadic, int(a), int(b))
        for looped in range(4)
        for a, b in zip(edges[:-1], edges[1:])
        if b > a
    ]


def verify_counting_bounds(max_dyadic: int, eps: float = config.COUNT_EPS,
                           map_fn: Callable = map, shards: int = 8) -> CountingSweep:
    """
    Vérifie chaque borne de comptage sur chaque tuple dyadique d'entrées ≤ max_dyadic,
    pour chaque m avec |m| ≤ 8·max_dyadic².

    La constante ajustée d'une borne est le plus grand rapport section/borne du
    sweep; constants_up_to en donne la restriction à un N_max plus petit.
    """
    if max_dyadic > config.ENUMERATION_CAP:
        raise EnumerationCapError(f"max_dyadic={max_dyadic} exceeds cap {config.ENUMERATION_CAP}")
    levels = dyadic_range(max_dyadic)
    m_max = 8 * max_dyadic * max_dyadic
    merged = _merge(map_fn(_section_pass, sweep_tasks(max_dyadic, shards)))
    hist = merged["histogram"]

    reports = []
    constants = {bound_id: 0.0 for bound_id in BOUNDS}
    for i0, N in enumerate(levels):
        for i1, N1 in enumerate(levels):
            for i2, N2 in enumerate(levels):
                for i3, N3 in enumerate(levels):
                    tup = DyadicTuple(N, N1, N2, N3)
                    row = hist[i0, i1, i2, i3]
                    nz = np.nonzero(row)[0]
                    report = CountReport(
                        tuple=tup,
                        counts={int(j - m_max): int(row[j]) for j in nz},
                        unconstrained=unconstrained_count(tup),
                    )
                    for bound_id, (fixed, shape) in BOUNDS.items():
                        if fixed:
                            count = int(merged[_fixed_key(_slot_indices(fixed))][i0, i1, i2, i3])
                        else:
                            count = int(row.max())
                        report.sections[bound_id] = count
                        report.bounds[bound_id] = float(shape(tup, eps))
                        constants[bound_id] = max(constants[bound_id], count / report.bounds[bound_id])
                    reports.append(report)
    logger.info(
        f"[COUNT] sweep max_dyadic={max_dyadic} eps={eps}: "
        + ", ".join(f"{k}={v:.3g}" for k, v in constants.items())
    )
    return CountingSweep(max_dyadic=max_dyadic, eps=eps, reports=reports, constants=constants)


# ============================================================================
# NECESSITY OF THE EXCLUSIONS
# ============================================================================

def exclusion_counterexample(tup: DyadicTuple = DyadicTuple(16, 16, 2, 2),
                             eps: float = config.COUNT_EPS) -> Dict[str, float]:
    """|S^{N,(0)}| avec et sans n ≠ n1, n3, rapporté à la forme de la borne totale."""
    with_ex = len(enumerate_S(tup, 0, exclusions=True))
    without = len(enumerate_S(tup, 0, exclusions=False))
    shape = _total_bound(tup, eps)
    logger.info(f"[COUNT] exclusions at {tup.label()}, m=0: with={with_ex} without={without}")
    return {
        "tuple": tup.label(),
        "with_exclusions": with_ex,
        "without_exclusions": without,
        "bound_shape": shape,
        "ratio_with": with_ex / shape,
        "ratio_without": without / shape,
    }


# ============================================================================
# DUAL-VECTOR BOUND
# ============================================================================

def dual_vector_extreme(A: np.ndarray, N: float, a1: float) -> float:
    """max sur s ∈ {±N^a1}^r de |A^{-1} s|."""
    A = np.asarray(A, dtype=float)
    r = A.shape[0]
    signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * r), indexing="ij")).reshape(r, -1)
    y = np.linalg.solve(A, signs * float(N) ** a1)
    return float(np.max(np.linalg.norm(y, axis=0)))


def _integer_ball_point(rng: np.random.Generator, r: int, N: int) -> np.ndarray:
    while True:
        v = rng.integers(-N, N + 1, size=r)
        if 0 < np.dot(v, v) <= N * N:
            return v


def dual_vector_bound_check(r: int, N: int, a1: float, trials: int, seed: int = 0) -> float:
    """
    max sur des repères entiers aléatoires {α_i} ⊂ {|α| ≤ N} de max|y| / N^{(r+1)·a1},
    où y parcourt les sommets de {|y·α_i| ≤ N^a1}.
    """
    if not 1 <= r <= 3:
        raise ValueError(f"rank must be 1, 2 or 3, got {r}")
    rng = np.random.Generator(np.random.Philox(derive_seed(seed, "dual", r, N)))
    exponent = (r + 1) * a1
    worst = 0.0
    done = 0
    while done < trials:
        A = np.stack([_integer_ball_point(rng, r, N) for _ in range(r)])
        if round(abs(np.linalg.det(A))) == 0:
            continue
        worst = max(worst, dual_vector_extreme(A, N, a1) / float(N) ** exponent)
        done += 1
    return worst
