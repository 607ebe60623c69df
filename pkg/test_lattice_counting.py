# test_lattice_counting.py
"""
Tests du comptage de points du réseau.

Tests:
1. DyadicTuple: validation, ordre, symétrie n1 ↔ n3
2. Identité de phase sur l'hyperplan de convolution
3. Énumération: blocs, phase et exclusions respectés
4. Partition Σ_m |S^{(m)}| = compte non contraint
5. Sweep complet contre l'énumération directe
6. Paires de diviseurs contre la force brute
7. Nécessité des exclusions
8. Vecteurs duaux
9. Plafond d'énumération
10. Stabilité des constantes ajustées entre niveaux N_max
11. Sections à slots fixés contre l'énumération filtrée
"""
from collections import Counter

import numpy as np
import pytest

from lattice_counting import (
    BOUNDS,
    DyadicTuple,
    EnumerationCapError,
    count_fixed,
    divisor_pairs,
    divisor_sweep,
    dual_vector_bound_check,
    dual_vector_extreme,
    enumerate_S,
    exclusion_counterexample,
    phase_histogram,
    phase_phi,
    section_maxima,
    unconstrained_count,
    verify_counting_bounds,
)
from spectral_core import block_of, block_points
from utils import constant_growth, growth_levels


def test_dyadic_tuple():
    """Test 1: Validation et ordre"""
    t = DyadicTuple(4, 1, 8, 2)
    assert t.ordered == (8, 4, 2, 1)
    assert (t.n_max, t.n_med, t.n_min) == (8, 4, 2)
    assert t.swap13() == DyadicTuple(4, 2, 8, 1)
    assert t.label() == "(4,1,8,2)"
    with pytest.raises(ValueError):
        DyadicTuple(3, 1, 1, 1)


def test_phase_identity():
    """Test 2: φ = 2(n2 − n1)·(n2 − n3) quand n = n1 − n2 + n3"""
    rng = np.random.default_rng(8)
    n1, n2, n3 = (rng.integers(-20, 21, size=(200, 2)) for _ in range(3))
    n = n1 - n2 + n3
    expected = 2 * np.sum((n2 - n1) * (n2 - n3), axis=1)
    np.testing.assert_array_equal(phase_phi(n, n1, n2, n3), expected)


@pytest.mark.parametrize("tup", [DyadicTuple(2, 2, 2, 2), DyadicTuple(4, 2, 1, 4), DyadicTuple(1, 4, 4, 1)])
def test_enumeration_constraints(tup):
    """Test 3: Chaque quadruplet énuméré vérifie blocs, phase et exclusions"""
    for m in list(phase_histogram(tup))[:5]:
        quads = enumerate_S(tup, m)
        assert len(quads) > 0
        n, n1, n2, n3 = (quads[:, i, :] for i in range(4))
        np.testing.assert_array_equal(n - n1 + n2 - n3, 0)
        np.testing.assert_array_equal(phase_phi(n, n1, n2, n3), m)
        assert np.all(np.any(n != n1, axis=1)) and np.all(np.any(n != n3, axis=1))
        for slot, N in zip((n, n1, n2, n3), tup.as_tuple()):
            np.testing.assert_array_equal(block_of(np.sum(slot * slot, axis=1), 16), N)
    assert len(enumerate_S(tup, 10 ** 6)) == 0
    assert enumerate_S(tup, 10 ** 6).shape == (0, 4, 2)


@pytest.mark.parametrize("tup", [DyadicTuple(2, 2, 2, 2), DyadicTuple(4, 2, 2, 4), DyadicTuple(8, 8, 1, 1),
                                 DyadicTuple(4, 4, 4, 4)])
def test_partition_identity(tup):
    """Test 4: Σ_m |S^{N,(m)}| = #{convolution, exclusions} sans contrainte de phase"""
    hist = phase_histogram(tup)
    assert sum(hist.values()) == unconstrained_count(tup)
    # n1 ↔ n3 préserve φ et échange les exclusions
    assert hist == phase_histogram(tup.swap13())


def test_sweep_matches_enumeration():
    """Test 5: Le sweep vectorisé reproduit l'énumération directe"""
    serial = verify_counting_bounds(2, map_fn=lambda f, xs: [f(x) for x in xs], shards=3)
    assert len(serial.reports) == 16
    assert set(serial.constants) == set(BOUNDS)
    for report in serial.reports:
        tup = report.tuple
        assert report.counts == phase_histogram(tup)
        assert report.total == report.unconstrained
        expected = {k: 0 for k in BOUNDS}
        for m in report.counts:
            for k, v in section_maxima(tup, m).items():
                expected[k] = max(expected[k], v)
        assert report.sections == expected, tup.label()

    again = verify_counting_bounds(2, shards=5)
    assert again.constants == serial.constants


def test_divisor_pairs():
    """Test 6: Paires de diviseurs contre la force brute"""
    for m in range(-40, 41):
        if m == 0:
            continue
        for a0, M, b0, Nb in ((0, 50, 0, 50), (3, 4, -2, 6), (-5, 2, 1, 1)):
            brute = sum(
                1
                for a in range(a0 - M, a0 + M + 1)
                for b in range(b0 - Nb, b0 + Nb + 1)
                if a * b == m
            )
            assert divisor_pairs(m, a0, M, b0, Nb) == brute
    with pytest.raises(ValueError):
        divisor_pairs(0, 0, 1, 0, 1)

    sweep = divisor_sweep(100)
    # 2·τ(m)/m^0.1 culmine sur un m très composé
    assert sweep["max_ratio"] >= 2 * 12 / 60 ** 0.1
    assert sweep["argmax"] <= 100


def test_exclusion_counterexample():
    """Test 7: Sans exclusions, le compte à m = 0 explose"""
    res = exclusion_counterexample(DyadicTuple(8, 8, 2, 2))
    assert res["without_exclusions"] > res["with_exclusions"]
    # seul n = n1, n2 = n3 est possible: |Q_8|·|Q_2| quadruplets de plus
    assert res["without_exclusions"] - res["with_exclusions"] == len(block_points(8)) * len(block_points(2))
    assert res["ratio_without"] > res["ratio_with"]


def test_dual_vectors():
    """Test 8: Vecteurs duaux"""
    assert dual_vector_extreme(np.array([[1.0]]), 4, 1.0) == pytest.approx(4.0)
    assert dual_vector_extreme(np.array([[2.0]]), 4, 1.0) == pytest.approx(2.0)
    # A = N·I: |y| = √r·N^{a1 − 1}
    assert dual_vector_extreme(8.0 * np.eye(2), 8, 1.0) == pytest.approx(np.sqrt(2.0))

    first = dual_vector_bound_check(2, 16, 0.5, trials=30, seed=4)
    assert first > 0.0
    assert dual_vector_bound_check(2, 16, 0.5, trials=30, seed=4) == first
    with pytest.raises(ValueError):
        dual_vector_bound_check(4, 16, 0.5, trials=1)


def test_enumeration_cap():
    """Test 9: Plafond d'énumération"""
    with pytest.raises(EnumerationCapError):
        enumerate_S(DyadicTuple(32, 1, 1, 1), 0)
    with pytest.raises(EnumerationCapError):
        verify_counting_bounds(32)


def test_constant_stability():
    """Test 10: Constantes par niveau, croissance et seuil de 10 %"""
    sweep = verify_counting_bounds(2)
    assert sweep.constants_up_to(2) == sweep.constants
    base = sweep.constants_up_to(1)
    (single,) = [r for r in sweep.reports if r.tuple == DyadicTuple(1, 1, 1, 1)]
    assert base == single.ratios
    # les constantes ne peuvent que croître avec N_max
    assert all(sweep.constants[k] >= base[k] for k in base)

    assert growth_levels(16) == [4, 8, 16]
    assert growth_levels(4) == [2, 4]
    assert growth_levels(1) == [1]

    fits = {4: {"a": 1.0, "b": 0.0, "c": 2.0}, 8: {"a": 1.05, "b": 0.0, "c": 2.0},
            16: {"a": 1.2, "b": 0.0, "c": 2.1}}
    res = constant_growth(fits, 1.10)
    assert res["levels"] == [4, 8, 16]
    assert res["growth"]["a"] == pytest.approx([1.05, 1.2 / 1.05])
    assert res["growth"]["b"] == [1.0, 1.0]
    assert not res["stable"]
    assert constant_growth(fits, 1.15)["stable"]

    appearing = constant_growth({8: {"a": 0.0}, 16: {"a": 0.5}}, 1.10)
    assert appearing["worst"] == float("inf") and not appearing["stable"]
    assert constant_growth({4: {"a": 1.0}}, 1.10) == {
        "levels": [4], "growth": {"a": []}, "worst": 1.0, "tolerance": 1.10, "stable": True,
    }


def test_count_fixed_sections():
    """Test 11: count_fixed contre un décompte direct des sections de enumerate_S"""
    tup = DyadicTuple(2, 4, 2, 2)
    hist = phase_histogram(tup)
    m = max(hist, key=hist.get)
    quads = enumerate_S(tup, m).tolist()
    for fixed in (("n",), ("n1",), ("n3",), ("n", "n1"), ("n1", "n3"), ("n2", "n3")):
        slots = [("n", "n1", "n2", "n3").index(s) for s in fixed]
        sections = Counter(tuple(tuple(q[s]) for s in slots) for q in quads)
        best, where = count_fixed(tup, m, fixed)
        assert best == max(sections.values()), fixed
        assert sections[where] == best
        assert best <= len(quads)

    assert count_fixed(tup, m, ()) == (len(quads), ())
    assert count_fixed(tup, 10 ** 6, ("n",)) == (0, None)
    with pytest.raises(ValueError):
        count_fixed(tup, m, ("n4",))
