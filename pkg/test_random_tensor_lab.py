# test_random_tensor_lab.py
"""
Tests des noyaux aléatoires et du terme cubique purement stochastique.

Tests:
1. Monômes de Wick complexes
2. RandomKernelSpec: variantes, slots gaussiens
3. Noyaux: forme, support vide, ensemble dégénéré, contraction générique
4. Normes Monte Carlo: nombre minimal d'échantillons, déterminisme, encadrement
5. Orthogonalité du chaos et covariance par translation
6. Croissance des moments et balayage d'échelle
7. Intégrales de phase et forme close contre Monte Carlo
8. Termes résonants
9. Noyau H1 entrée par entrée contre une quadruple boucle
"""
import math

import numpy as np
import pytest

from gibbs_sampler import GaussianEnsemble
from lattice_counting import SLOTS, DyadicTuple, enumerate_S
from random_tensor_lab import (
    QuadratureResolutionError,
    RandomKernelSpec,
    build_generic_random_tensor,
    build_kernel,
    chaos_orthogonality_check,
    complex_wick_monomial,
    dominant_phase,
    entry_second_moments,
    lp_estimate,
    mc_operator_norm,
    moment_growth_check,
    phase_integrals,
    plan_kernel,
    resonant_term_norms,
    sandwich_bounds,
    stochastic_closed_form,
    stochastic_cubic_second_moment,
    stochastic_time_sweep,
    translation_covariance_check,
    verify_rt_scaling,
)
from spectral_core import RadiusMismatchError, block_points, bump, single_mode, zeros
from tensor_norms import SparseTensor, hilbert_schmidt

TUP = DyadicTuple(2, 2, 2, 2)


def test_wick_monomials():
    """Test 1: :g^p ḡ^q: pour de petits ordres"""
    g = np.array([0.3 + 0.4j, -1.2 + 0.1j])
    np.testing.assert_allclose(complex_wick_monomial(g, 1, 1), np.abs(g) ** 2 - 1.0)
    np.testing.assert_allclose(complex_wick_monomial(g, 2, 0), g ** 2)
    np.testing.assert_allclose(complex_wick_monomial(g, 2, 1), g ** 2 * np.conj(g) - 2.0 * g)
    np.testing.assert_allclose(complex_wick_monomial(g, 0, 0), 1.0)
    # ordres différents par entrée
    mixed = complex_wick_monomial(g, np.array([1, 0]), np.array([1, 1]))
    np.testing.assert_allclose(mixed, [abs(g[0]) ** 2 - 1.0, np.conj(g[1])])


def test_kernel_spec():
    """Test 2: Variantes et slots gaussiens"""
    spec = RandomKernelSpec("h3", TUP, 0)
    assert spec.variant == "H3"
    assert spec.layout.inputs == ("n2", "n3")
    assert spec.gaussian_count == 1
    generic = RandomKernelSpec("generic", TUP, 0, gaussian_slots=("n2",))
    assert generic.layout.inputs == ("n1", "n3")
    with pytest.raises(ValueError):
        RandomKernelSpec("H5", TUP, 0)
    with pytest.raises(ValueError):
        RandomKernelSpec("generic", TUP, 0, gaussian_slots=("n",))
    with pytest.raises(ValueError):
        RandomKernelSpec("generic", TUP, 0, gaussian_slots=("n1", "n1"))


def test_kernel_shapes():
    """Test 3: Forme des noyaux, support vide, ensemble dégénéré"""
    m = dominant_phase(TUP)
    plan = plan_kernel(RandomKernelSpec("H1", TUP, m))
    assert plan.shape == (len(block_points(2)), len(block_points(2)))
    assert len(plan.support) == len(enumerate_S(TUP, m))

    zero = build_kernel(RandomKernelSpec("H1", TUP, m), GaussianEnsemble.degenerate(2))
    assert np.all(zero == 0)

    # n ∈ Q_1, n2, n3 ∈ Q_1 force |n1| ≤ 3: Q_8 est hors d'atteinte
    empty = DyadicTuple(1, 8, 1, 1)
    for variant in ("H1", "H3"):
        mat = build_kernel(RandomKernelSpec(variant, empty, 0), GaussianEnsemble.draw(1, 8))
        assert np.all(mat == 0)
    assert sandwich_bounds(RandomKernelSpec("H3", empty, 0)) == (0.0, 0.0)


def test_generic_contraction():
    """Test 3 bis: La contraction creuse reproduit le noyau matérialisé"""
    m = dominant_phase(TUP)
    ens = GaussianEnsemble.draw(77, 2)
    quads = enumerate_S(TUP, m)
    h = SparseTensor(SLOTS, quads, np.ones(len(quads)))
    contracted = build_generic_random_tensor(h, ("n1", "n3"), ens)
    assert contracted.axes == ("n", "n2")
    dense = build_kernel(RandomKernelSpec("generic", TUP, m), ens)
    assert hilbert_schmidt(contracted) == pytest.approx(np.linalg.norm(dense), rel=1e-12)
    assert build_generic_random_tensor(h, (), ens) is h
    with pytest.raises(ValueError):
        build_generic_random_tensor(h, SLOTS, ens)


def test_mc_norms():
    """Test 4: Monte Carlo, déterminisme et encadrement"""
    spec = RandomKernelSpec("H1", TUP, dominant_phase(TUP))
    with pytest.raises(ValueError):
        mc_operator_norm(spec, 2.0, 10, seed=0)
    first = mc_operator_norm(spec, 2.0, 200, seed=9)
    second = mc_operator_norm(spec, 2.0, 200, seed=9)
    assert first == second
    assert first.ci_lo <= first.estimate <= first.ci_hi

    lower, upper = sandwich_bounds(spec)
    assert 0.0 < lower <= upper
    assert 0.9 * lower <= first.estimate <= 1.1 * upper

    plan = plan_kernel(spec)
    moments = entry_second_moments(plan)
    assert moments.shape == plan.shape
    assert math.sqrt(moments.sum()) == pytest.approx(upper, rel=1e-12)

    flat = lp_estimate([2.0] * 50, 4.0, seed=1)
    assert flat.estimate == pytest.approx(2.0)
    assert flat.ci_lo == pytest.approx(2.0) and flat.ci_hi == pytest.approx(2.0)


def test_chaos_and_translation():
    """Test 5: Entrées à supports disjoints décorrélées, loi invariante par translation"""
    tup = DyadicTuple(4, 4, 4, 4)
    res = chaos_orthogonality_check(tup, dominant_phase(tup), n_samples=2000, seed=21)
    assert res["passed"], res

    with pytest.raises(ValueError):
        chaos_orthogonality_check(DyadicTuple(1, 8, 1, 1), 0, n_samples=10, seed=0)

    shift = translation_covariance_check(2, 2, side=3, shift=(5, 3), n_samples=200, seed=4)
    assert shift["passed"], shift
    assert 0.0 <= shift["statistic"] <= 1.0


def test_moments_and_scaling():
    """Test 6: Croissance hypercontractive et structure du balayage"""
    spec = RandomKernelSpec("H1", TUP, dominant_phase(TUP))
    growth = moment_growth_check(spec, ps=(2, 4), n_samples=300, seed=3)
    assert growth["gaussians"] == 2
    assert growth["rows"][0]["growth"] == pytest.approx(1.0)
    assert growth["rows"][1]["growth"] >= 1.0

    report = verify_rt_scaling("h1", (1, 2), p=2.0, n_samples=100, seed=0)
    assert report.variant == "H1"
    assert [r["size"] for r in report.rows] == [1, 2]
    first = report.rows[0]
    assert first["predicted_rhs"] == pytest.approx(first["estimate"])
    assert first["ratio"] == pytest.approx(1.0)


def test_phase_integrals():
    """Test 7: J(φ), forme close et Monte Carlo"""
    T = 0.5
    dt = 1e-4
    t = np.arange(-3.0, 3.0, dt)
    eta_l2 = float(np.sum(bump(t / T) ** 2) * dt)
    # b′ = 0: Parseval
    np.testing.assert_allclose(phase_integrals([0, 7], T, 0.0), eta_l2, rtol=1e-6)

    J = phase_integrals([-30, -3, 0, 3, 30], T, 0.49)
    assert J[0] == pytest.approx(J[4], rel=1e-9)
    assert J[1] == pytest.approx(J[3], rel=1e-9)
    assert J[2] > J[3] > J[4] > 0.0

    with pytest.raises(QuadratureResolutionError):
        phase_integrals([10 ** 6], T, 0.49)
    with pytest.raises(QuadratureResolutionError):
        phase_integrals([0], 40.0, 0.49)

    assert stochastic_closed_form(DyadicTuple(1, 8, 1, 1), 0.1, 0.48, T) == 0.0

    tup = DyadicTuple(1, 1, 1, 1)
    closed, mc = stochastic_cubic_second_moment(tup, 0.1, 0.48, T, n_samples=200, seed=6)
    assert closed > 0.0
    assert abs(mc.estimate - math.sqrt(closed)) <= 1.5 * (mc.ci_hi - mc.ci_lo) + 0.02 * math.sqrt(closed)
    with pytest.raises(ValueError):
        stochastic_cubic_second_moment(tup, 0.1, 0.48, 2.0, n_samples=1)

    sweep = stochastic_time_sweep(tup, 0.1, 0.48, Ts=(1.0, 0.5, 0.25))
    assert len(sweep["norm"]) == 3
    assert sweep["norm"][0] > sweep["norm"][2]


def test_resonant_terms():
    """Test 8: Termes résonants"""
    assert resonant_term_norms("www", 0.1, 0.5, 2, w0=zeros(2)) == 0.0
    assert resonant_term_norms("zzz", 0.1, 0.5, 2, ensemble=GaussianEnsemble.degenerate(2)) == 0.0
    assert resonant_term_norms("zzz", 0.1, 0.5, 2, ensemble=GaussianEnsemble.draw(3, 2)) > 0.0
    mixed = resonant_term_norms("wzz", 0.1, 0.5, 2, ensemble=GaussianEnsemble.draw(3, 4),
                                w0=single_mode(2, (1, 0)))
    assert mixed > 0.0

    with pytest.raises(ValueError):
        resonant_term_norms("zwz", 0.1, 0.5, 2, ensemble=GaussianEnsemble.draw(3, 2))
    with pytest.raises(ValueError):
        resonant_term_norms("zzz", 0.1, 0.5, 2)
    with pytest.raises(RadiusMismatchError):
        resonant_term_norms("www", 0.1, 0.5, 2, w0=zeros(3))
    with pytest.raises(RadiusMismatchError):
        resonant_term_norms("zzz", 0.1, 0.5, 4, ensemble=GaussianEnsemble.draw(3, 2))


def _bracket(n) -> float:
    return math.sqrt(1.0 + n[0] ** 2 + n[1] ** 2)


@pytest.mark.parametrize("weights", [True, False])
def test_h1_kernel_entries(weights):
    """Test 9: H1[n, n2] = Σ ⟨n⟩^s/⟨n2⟩^s · g_{n1} g_{n3}/(⟨n1⟩⟨n3⟩) sur S^{N,(m)}"""
    m = dominant_phase(TUP)
    s = 0.3
    ens = GaussianEnsemble.draw(31, 2)
    kernel = build_kernel(RandomKernelSpec("H1", TUP, m, s=s, weights=weights), ens)

    pn = [tuple(p) for p in block_points(TUP.N).tolist()]
    p1 = [tuple(p) for p in block_points(TUP.N1).tolist()]
    p2 = [tuple(p) for p in block_points(TUP.N2).tolist()]
    p3 = [tuple(p) for p in block_points(TUP.N3).tolist()]
    expected = np.zeros((len(pn), len(p2)), dtype=np.complex128)
    hits = 0
    for i, n in enumerate(pn):
        for n1 in p1:
            for j, n2 in enumerate(p2):
                for n3 in p3:
                    if (n1[0] - n2[0] + n3[0], n1[1] - n2[1] + n3[1]) != n:
                        continue
                    if n1 == n or n3 == n:
                        continue
                    phase = sum(x * x for x in n) - sum(x * x for x in n1) + sum(x * x for x in n2) - sum(x * x for x in n3)
                    if phase != m:
                        continue
                    # n1 = n3 donne :g²: = g²
                    entry = ens.value(n1) * ens.value(n3)
                    if weights:
                        entry *= (_bracket(n) / _bracket(n2)) ** s / (_bracket(n1) * _bracket(n3))
                    expected[i, j] += entry
                    hits += 1
    assert hits == len(enumerate_S(TUP, m))
    np.testing.assert_allclose(kernel, expected, rtol=1e-12, atol=1e-14)
