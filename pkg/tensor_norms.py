# tensor_norms.py
"""
Tenseurs creux sur (Z²)^A et normes d'opérateur par partition.

‖h‖_{n_B → n_C} est la norme d'opérateur de la matricisation de h (lignes
indexées par n_C, colonnes par n_B). Les lignes et colonnes sont restreintes au
support et triées, ce qui rend la matricisation canonique.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

import config
from lattice_counting import (
    DyadicTuple,
    SLOTS,
    enumerate_S,
    max_section_size,
    supports_by_phase,
)
from utils import dyadic_range, logger


class PowerIterationError(RuntimeError):
    def __init__(self, last_estimate: float, message: str = ""):
        super().__init__(message or f"power iteration did not converge (last estimate {last_estimate:.6g})")
        self.last_estimate = last_estimate


class AxisMismatchError(ValueError):
    """La partition ne couvre pas les axes du tenseur."""


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class SparseTensor:
    """
    Entrées h[n_A] stockées en tableaux parallèles.

    coords a la forme (K, |A|, 2): coords[k, j] est la fréquence sur l'axe axes[j].
    Les entrées nulles sont supprimées à la construction.
    """

    axes: Tuple[str, ...]
    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, len(self.axes), 2)
        values = np.asarray(self.values, dtype=np.complex128).reshape(-1)
        if len(coords) != len(values):
            raise ValueError(f"{len(coords)} coordinates for {len(values)} values")
        if len(set(self.axes)) != len(self.axes):
            raise AxisMismatchError(f"repeated axis names in {self.axes}")
        keep = values != 0
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "coords", coords[keep])
        object.__setattr__(self, "values", values[keep])

    @classmethod
    def from_dict(cls, axes: Sequence[str], entries: Mapping[Tuple, complex]) -> "SparseTensor":
        keys = list(entries)
        coords = np.array(keys, dtype=np.int64).reshape(len(keys), len(axes), 2)
        return cls(tuple(axes), coords, np.array([entries[k] for k in keys], dtype=np.complex128))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, row_points: np.ndarray, col_points: np.ndarray,
                    row_axis: str = "c", col_axis: str = "b") -> "SparseTensor":
        """Tenseur sur les axes (col_axis, row_axis) avec h[col_points[j], row_points[i]] = matrix[i, j]."""
        i, j = np.nonzero(matrix)
        coords = np.stack([col_points[j], row_points[i]], axis=1)
        return cls((col_axis, row_axis), coords, matrix[i, j])

    @property
    def nnz(self) -> int:
        return len(self.values)

    def conj(self) -> "SparseTensor":
        return SparseTensor(self.axes, self.coords, np.conj(self.values))

    def __mul__(self, scalar: complex) -> "SparseTensor":
        return SparseTensor(self.axes, self.coords, self.values * scalar)

    __rmul__ = __mul__

    def with_values(self, values: np.ndarray) -> "SparseTensor":
        return SparseTensor(self.axes, self.coords, values)

    def axis_index(self, name: str) -> int:
        try:
            return self.axes.index(name)
        except ValueError:
            raise AxisMismatchError(f"axis {name!r} not in {self.axes}") from None


@dataclass(frozen=True)
class Partition:
    """B → C: entrées sur les axes B, sorties sur les axes C."""

    B: Tuple[str, ...]
    C: Tuple[str, ...]

    def __post_init__(self):
        if set(self.B) & set(self.C):
            raise AxisMismatchError(f"partition sides overlap: {self.B} / {self.C}")

    def check(self, h: SparseTensor) -> None:
        if set(self.B) | set(self.C) != set(h.axes) or len(self.B) + len(self.C) != len(h.axes):
            raise AxisMismatchError(f"partition {self.label} does not cover axes {h.axes}")

    def dual(self) -> "Partition":
        return Partition(self.C, self.B)

    @property
    def label(self) -> str:
        return "".join(self.B) + "->" + "".join(self.C)

    @classmethod
    def parse(cls, text: str) -> "Partition":
        """'n2n3->nn1' -> Partition(('n2','n3'), ('n','n1'))."""
        left, _, right = text.partition("->")

        def axes(side: str) -> Tuple[str, ...]:
            out, i = [], 0
            while i < len(side):
                j = i + 1
                while j < len(side) and side[j].isdigit():
                    j += 1
                out.append(side[i:j])
                i = j
            return tuple(out)

        return cls(axes(left), axes(right))


@dataclass(frozen=True)
class BaseTensorSpec:
    tuple: DyadicTuple
    m: int


# ============================================================================
# MATRICIZATION
# ============================================================================

def _side_index(h: SparseTensor, side: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    """(keys, inverse): coordonnées distinctes triées d'un côté sur le support, et l'indice de chaque entrée."""
    if not side:
        return np.zeros((1, 0), dtype=np.int64), np.zeros(h.nnz, dtype=np.int64)
    cols = [h.axis_index(a) for a in side]
    flat = h.coords[:, cols, :].reshape(h.nnz, -1)
    keys, inverse = np.unique(flat, axis=0, return_inverse=True)
    return keys, inverse.reshape(-1)


def matricize(h: SparseTensor, p: Partition) -> Tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    """Lignes n_C, colonnes n_B, restreintes au support dans l'ordre lexicographique."""
    p.check(h)
    row_keys, rows = _side_index(h, p.C)
    col_keys, cols = _side_index(h, p.B)
    mat = sp.coo_matrix((h.values, (rows, cols)), shape=(len(row_keys), len(col_keys))).tocsr()
    return mat, row_keys, col_keys


# ============================================================================
# OPERATOR NORMS
# ============================================================================

def _dense_norm(mat: np.ndarray) -> float:
    """Plus grande valeur singulière via la matrice de Gram du plus petit côté."""
    if mat.shape[0] <= mat.shape[1]:
        gram = mat @ mat.conj().T
    else:
        gram = mat.conj().T @ mat
    top = np.linalg.eigvalsh(gram)[-1]
    return math.sqrt(max(float(top), 0.0))


def power_iteration(mat, tol: float = config.POWER_ITER_TOL,
                    max_iter: int = config.POWER_ITER_MAX) -> float:
    """
    σ_max par itération sur HᴴH depuis le vecteur de uns normalisé.

    Un départ orthogonal à l'espace singulier dominant est relancé une fois
    depuis une perturbation fixe du vecteur de uns.
    """
    n = mat.shape[1]
    dtype = np.complex128 if np.iscomplexobj(mat.data if sp.issparse(mat) else mat) else np.float64
    starts = [np.ones(n, dtype=dtype), 1.0 + 0.5 * np.cos(np.arange(n) * 2.399963229728653)]
    estimate = 0.0
    for x in starts:
        x = x.astype(dtype) / np.linalg.norm(x)
        estimate = 0.0
        for _ in range(max_iter):
            z = mat.conj().T @ (mat @ x)
            nz = float(np.linalg.norm(z))
            if nz == 0.0:
                break
            new = math.sqrt(nz)
            x = z / nz
            if abs(new - estimate) <= tol * new:
                return new
            estimate = new
        else:
            raise PowerIterationError(estimate)
        logger.debug("[TENSOR] power iteration stalled on its start vector, retrying")
    return estimate


def _matrix_norm(mat) -> float:
    if min(mat.shape) == 0:
        return 0.0
    if min(mat.shape) <= config.DENSE_NORM_MAX_DIM:
        return _dense_norm(mat.toarray() if sp.issparse(mat) else np.asarray(mat))
    return power_iteration(mat)


def operator_norm(mat) -> float:
    """
    Plus grande valeur singulière d'un tableau dense ou d'une matrice creuse scipy.

    Une entrée creuse est découpée en composantes connexes de son graphe
    d'incidence lignes/colonnes; la norme est la plus grande norme de composante.
    Les composantes complètes à entrées constantes sont de rang un.
    """
    if not sp.issparse(mat):
        return _matrix_norm(np.asarray(mat))
    mat = sp.csr_matrix(mat)
    mat.eliminate_zeros()
    if mat.nnz == 0:
        return 0.0
    n_rows, n_cols = mat.shape
    graph = sp.bmat([[None, mat], [mat.T, None]], format="csr")
    graph.data = np.ones_like(graph.data, dtype=np.int8)
    n_comp, labels = connected_components(graph, directed=False)
    if n_comp == 1:
        return _matrix_norm(mat)

    coo = mat.tocoo()
    entry_comp = labels[coo.row]
    nnz = np.bincount(entry_comp, minlength=n_comp)
    rows = np.bincount(labels[:n_rows], minlength=n_comp)
    cols = np.bincount(labels[n_rows:], minlength=n_comp)
    mod2 = np.abs(coo.data) ** 2
    best = 0.0

    # composantes à une ligne ou une colonne: norme ℓ² des entrées
    l2 = np.sqrt(np.bincount(entry_comp, weights=mod2, minlength=n_comp))
    thin = (rows == 1) | (cols == 1)
    if np.any(thin):
        best = max(best, float(np.max(l2[thin])))

    # composantes complètes de module et phase constants: |v|·√(rc)
    first = np.full(n_comp, -1)
    first[entry_comp[::-1]] = np.arange(len(entry_comp))[::-1]
    ref = coo.data[first[entry_comp]]
    uniform = np.ones(n_comp, dtype=bool)
    np.logical_and.at(uniform, entry_comp, coo.data == ref)
    rank_one = ~thin & uniform & (nnz == rows * cols)
    if np.any(rank_one):
        vals = np.abs(coo.data[first[rank_one]]) * np.sqrt(rows[rank_one] * cols[rank_one])
        best = max(best, float(np.max(vals)))

    for c in np.nonzero(~thin & ~rank_one)[0]:
        r_idx = np.nonzero(labels[:n_rows] == c)[0]
        c_idx = np.nonzero(labels[n_rows:] == c)[0]
        best = max(best, _matrix_norm(mat[r_idx][:, c_idx]))
    return best


def hilbert_schmidt(h: SparseTensor) -> float:
    return float(np.sqrt(np.sum(np.abs(h.values) ** 2)))


def partition_norm(h: SparseTensor, p: Partition) -> float:
    """‖h‖_{n_B → n_C}; un côté vide donne la norme ℓ² des entrées."""
    p.check(h)
    if h.nnz == 0:
        return 0.0
    if not p.B or not p.C:
        return hilbert_schmidt(h)
    mat, _, _ = matricize(h, p)
    return operator_norm(mat)


def schur_bound(h: SparseTensor, p: Partition) -> float:
    """√(max ligne ℓ¹ · max colonne ℓ¹) de la matricisation B → C de |h|."""
    p.check(h)
    if h.nnz == 0:
        return 0.0
    mat, _, _ = matricize(h.with_values(np.abs(h.values)), p)
    row_max = float(np.max(np.asarray(mat.sum(axis=1)).ravel()))
    col_max = float(np.max(np.asarray(mat.sum(axis=0)).ravel()))
    return math.sqrt(row_max * col_max)


# ============================================================================
# BASE TENSORS
# ============================================================================

def _support_tensor(quads: np.ndarray) -> SparseTensor:
    return SparseTensor(SLOTS, quads, np.ones(len(quads), dtype=np.complex128))


def base_tensor(spec: BaseTensorSpec) -> SparseTensor:
    """Indicatrice de S^{N,(m)} sur les axes (n, n1, n2, n3)."""
    return _support_tensor(enumerate_S(spec.tuple, spec.m))


def _half(a: float, b: float, e: float) -> float:
    return (a * b) ** (0.5 + e)


# libellé de partition -> forme de la borne en fonction de (tuple, ε)
BASE_BOUNDS: Dict[str, Callable[[DyadicTuple, float], float]] = {
    "n1n2n3->n": lambda t, e: min(
        t.N2 * min(t.N1, t.N3) ** e, (t.n_med * t.n_min) ** (0.5 + e)),
    "n1->nn2n3": lambda t, e: min(
        t.N3 * min(t.N, t.N2) ** e, _half(t.N, t.N2, e), _half(t.N, t.N3, e), _half(t.N2, t.N3, e)),
    "n2->nn1n3": lambda t, e: min(
        t.N * min(t.N1, t.N3) ** e, _half(t.N, t.N1, e), _half(t.N, t.N3, e), _half(t.N1, t.N3, e)),
    "n3->nn1n2": lambda t, e: min(
        t.N1 * min(t.N, t.N2) ** e, _half(t.N, t.N1, e), _half(t.N, t.N2, e), _half(t.N1, t.N2, e)),
    "n2n3->nn1": lambda t, e: min(t.N, t.N1) ** 0.5 * min(t.N2, t.N3) ** 0.5,
    "n1n3->nn2": lambda t, e: min(t.N, t.N2) ** e * min(t.N1, t.N3) ** e,
    "n1n2->nn3": lambda t, e: min(t.N, t.N3) ** 0.5 * min(t.N1, t.N2) ** 0.5,
}

BASE_PARTITIONS: Dict[str, Partition] = {label: Partition.parse(label) for label in BASE_BOUNDS}


@dataclass
class TensorBoundRow:
    tuple: DyadicTuple
    m: int
    partition: str
    exact: float
    schur: float
    counting: float
    hilbert_schmidt: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.exact / self.bound

    @property
    def chain_ok(self) -> bool:
        slack = 1e-9 * max(1.0, self.counting)
        return (self.exact <= self.schur + slack
                and self.schur <= self.counting + slack
                and self.exact <= self.hilbert_schmidt + slack)


@dataclass
class TensorBoundSweep:
    max_dyadic: int
    eps: float
    rows: List[TensorBoundRow]
    constants: Dict[str, float] = field(default_factory=dict)

    @property
    def chain_violations(self) -> int:
        return sum(1 for r in self.rows if not r.chain_ok)

    def constants_up_to(self, level: int) -> Dict[str, float]:
        out = {label: 0.0 for label in self.constants}
        for row in self.rows:
            if row.tuple.n_max <= level:
                out[row.partition] = max(out[row.partition], row.ratio)
        return out


def tuple_base_bounds(task: Tuple[DyadicTuple, float]) -> List[TensorBoundRow]:
    """Toutes les normes de partition de chaque h^{N,(m)} non vide d'un tuple."""
    tup, eps = task
    rows = []
    for m, quads in supports_by_phase(tup).items():
        h = _support_tensor(quads)
        hs = hilbert_schmidt(h)
        for label, p in BASE_PARTITIONS.items():
            counting = math.sqrt(max_section_size(quads, p.B) * max_section_size(quads, p.C))
            rows.append(TensorBoundRow(
                tuple=tup,
                m=m,
                partition=label,
                exact=partition_norm(h, p),
                schur=schur_bound(h, p),
                counting=counting,
                hilbert_schmidt=hs,
                bound=float(BASE_BOUNDS[label](tup, eps)),
            ))
    return rows


def verify_base_tensor_bounds(max_dyadic: int, eps: float = config.COUNT_EPS,
                              map_fn: Callable = map) -> TensorBoundSweep:
    """Normes de partition exactes des tenseurs de base face aux formes de bornes."""
    if max_dyadic > config.BASE_TENSOR_CAP:
        raise ValueError(f"max_dyadic={max_dyadic} exceeds the base-tensor cap {config.BASE_TENSOR_CAP}")
    levels = dyadic_range(max_dyadic)
    tasks = [
        (DyadicTuple(N, N1, N2, N3), eps)
        for N in levels for N1 in levels for N2 in levels for N3 in levels
    ]
    rows = [row for part in map_fn(tuple_base_bounds, tasks) for row in part]
    constants = {label: 0.0 for label in BASE_BOUNDS}
    for row in rows:
        constants[row.partition] = max(constants[row.partition], row.ratio)
    sweep = TensorBoundSweep(max_dyadic=max_dyadic, eps=eps, rows=rows, constants=constants)
    logger.info(
        f"[TENSOR] base-tensor sweep max_dyadic={max_dyadic}: {len(rows)} norms, "
        f"{sweep.chain_violations} chain violations"
    )
    return sweep
