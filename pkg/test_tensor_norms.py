# test_tensor_norms.py
"""
Tests des tenseurs creux et des normes par partition.

Tests:
1. SparseTensor: zéros supprimés, axes répétés
2. Partitions: parsing, label, dual, recouvrement
3. Norme d'opérateur dense contre numpy
4. Norme creuse par composantes connexes
5. Itération de puissance
6. Dualité ‖h‖_{B→C} = ‖h‖_{C→B} et côté vide = Hilbert-Schmidt
7. Chaîne exact ≤ Schur ≤ comptage sur les tenseurs de base
8. Plafond du sweep et constantes par niveau
9. Normes des tenseurs de base contre la matrice dense
"""
import numpy as np
import pytest
import scipy.sparse as sp

from lattice_counting import SLOTS, DyadicTuple, supports_by_phase
from tensor_norms import (
    AxisMismatchError,
    BASE_PARTITIONS,
    BaseTensorSpec,
    Partition,
    SparseTensor,
    base_tensor,
    hilbert_schmidt,
    matricize,
    operator_norm,
    partition_norm,
    power_iteration,
    schur_bound,
    tuple_base_bounds,
    verify_base_tensor_bounds,
)
from utils import constant_growth


def _dominant_m(tup: DyadicTuple) -> int:
    supports = supports_by_phase(tup)
    return max(supports, key=lambda m: len(supports[m]))


def test_sparse_tensor():
    """Test 1: Construction"""
    h = SparseTensor.from_dict(("a", "b"), {((0, 0), (1, 0)): 2.0, ((1, 1), (0, 1)): 0.0})
    assert h.nnz == 1
    assert h.coords.shape == (1, 2, 2)
    assert (h * 1j).values[0] == 2j
    assert h.conj().axis_index("b") == 1
    with pytest.raises(AxisMismatchError):
        h.axis_index("c")
    with pytest.raises(AxisMismatchError):
        SparseTensor(("a", "a"), np.zeros((0, 2, 2)), np.zeros(0))


def test_partitions():
    """Test 2: Parsing et validation"""
    p = Partition.parse("n2n3->nn1")
    assert p == Partition(("n2", "n3"), ("n", "n1"))
    assert p.label == "n2n3->nn1"
    assert p.dual() == Partition(("n", "n1"), ("n2", "n3"))
    assert Partition.parse("n1n2n3->n").B == ("n1", "n2", "n3")
    with pytest.raises(AxisMismatchError):
        Partition(("n", "n1"), ("n1", "n2"))

    h = base_tensor(BaseTensorSpec(DyadicTuple(2, 2, 2, 2), 0))
    with pytest.raises(AxisMismatchError):
        partition_norm(h, Partition(("n",), ("n1",)))


def test_dense_operator_norm():
    """Test 3: Plus grande valeur singulière contre numpy"""
    rng = np.random.default_rng(1)
    a = rng.standard_normal((30, 17)) + 1j * rng.standard_normal((30, 17))
    assert operator_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-10)
    assert operator_norm(np.zeros((0, 4))) == 0.0


def test_sparse_components():
    """Test 4: Bloc-diagonal: composante générique, rang un, ligne seule"""
    rng = np.random.default_rng(2)
    generic = rng.standard_normal((4, 5))
    uniform = np.full((3, 3), 0.7)
    thin = np.array([[3.0, 4.0]])
    dense = np.zeros((8, 10))
    dense[:4, :5] = generic
    dense[4:7, 5:8] = uniform
    dense[7, 8:10] = thin
    expected = np.linalg.norm(dense, 2)
    assert operator_norm(sp.csr_matrix(dense)) == pytest.approx(expected, rel=1e-10)
    # la composante de rang un seule
    assert operator_norm(sp.csr_matrix(dense[4:, 5:])) == pytest.approx(max(2.1, 5.0), rel=1e-12)
    assert operator_norm(sp.csr_matrix((3, 3))) == 0.0


def test_power_iteration():
    """Test 5: Itération de puissance sur une matrice à écart spectral net"""
    rng = np.random.default_rng(3)
    u, v = rng.standard_normal(60), rng.standard_normal(40)
    a = 0.1 * rng.standard_normal((60, 40)) + np.outer(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)) * 5.0
    assert power_iteration(sp.csr_matrix(a)) == pytest.approx(np.linalg.norm(a, 2), rel=1e-6)


def test_duality_and_hs():
    """Test 6: Dualité et côté vide"""
    tup = DyadicTuple(2, 2, 2, 2)
    h = base_tensor(BaseTensorSpec(tup, _dominant_m(tup)))
    assert h.nnz > 0
    for p in BASE_PARTITIONS.values():
        assert partition_norm(h, p) == pytest.approx(partition_norm(h, p.dual()), rel=1e-9)
        assert schur_bound(h, p) == pytest.approx(schur_bound(h, p.dual()), rel=1e-12)
    assert partition_norm(h, Partition((), SLOTS)) == pytest.approx(hilbert_schmidt(h))
    assert hilbert_schmidt(h) == pytest.approx(np.sqrt(h.nnz))

    mat, rows, cols = matricize(h, Partition.parse("n1n2n3->n"))
    assert mat.shape == (len(rows), len(cols))
    assert mat.nnz == h.nnz


@pytest.mark.parametrize("tup", [DyadicTuple(2, 2, 2, 2), DyadicTuple(4, 2, 1, 4), DyadicTuple(4, 4, 2, 2)])
def test_bound_chain(tup):
    """Test 7: exact ≤ Schur ≤ comptage, exact ≤ HS"""
    rows = tuple_base_bounds((tup, 0.25))
    assert rows
    assert all(row.chain_ok for row in rows)
    assert {row.partition for row in rows} == set(BASE_PARTITIONS)


def test_sweep_cap():
    """Test 8: Au-delà du plafond, ValueError"""
    with pytest.raises(ValueError):
        verify_base_tensor_bounds(16)
    sweep = verify_base_tensor_bounds(2)
    assert sweep.chain_violations == 0
    assert set(sweep.constants) == set(BASE_PARTITIONS)

    # constantes restreintes aux tuples d'entrées ≤ N_max
    assert sweep.constants_up_to(2) == sweep.constants
    low = sweep.constants_up_to(1)
    for label in BASE_PARTITIONS:
        ratios = [r.ratio for r in sweep.rows if r.tuple.n_max == 1 and r.partition == label]
        assert low[label] == max(ratios, default=0.0)
    stability = constant_growth({1: low, 2: sweep.constants}, 1.10)
    assert all(g >= 1.0 for steps in stability["growth"].values() for g in steps)


@pytest.mark.parametrize("tup", [DyadicTuple(2, 2, 2, 2), DyadicTuple(4, 2, 1, 4)])
def test_base_norms_dense(tup):
    """Test 9: ‖h‖_{B→C} contre la plus grande valeur singulière de la matrice dense"""
    m = _dominant_m(tup)
    h = base_tensor(BaseTensorSpec(tup, m))
    quads = [tuple(map(tuple, q)) for q in h.coords.tolist()]
    for label, p in BASE_PARTITIONS.items():
        b_idx = [SLOTS.index(a) for a in p.B]
        c_idx = [SLOTS.index(a) for a in p.C]
        rows = sorted({tuple(q[i] for i in c_idx) for q in quads})
        cols = sorted({tuple(q[i] for i in b_idx) for q in quads})
        dense = np.zeros((len(rows), len(cols)))
        for q in quads:
            dense[rows.index(tuple(q[i] for i in c_idx)), cols.index(tuple(q[i] for i in b_idx))] += 1.0
        assert partition_norm(h, p) == pytest.approx(np.linalg.norm(dense, 2), rel=1e-9), label
