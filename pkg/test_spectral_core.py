# test_spectral_core.py
"""
Tests du noyau spectral: champs de Fourier, projecteurs, flot libre, normes.

Tests:
1. Disques et blocs dyadiques du réseau
2. FourierField: coefficients hors disque, rayons incompatibles
3. Plancherel et aller-retour physique/spectral
4. Flot libre: phase e^{−it|n|²}, norme conservée
5. Projecteurs P_N, Q_N, S_N et leurs erreurs
6. Fonction plateau η
7. Norme X^{s,b} à s = b = 0 et résolution insuffisante
8. Rapport de Strichartz sur un mode pur, dénominateur nul
9. Snapshots binaires
10. Normes H^s, changement de rayon, norme L^p espace-temps
11. X^{s,b} d'un mode pur: décalage de modulation τ → τ + |n0|²
12. X^{s,b} croissante en s et en b
13. Localisation en temps: ‖η_T e^{itΔ}f‖ en T^{1/2} (b = 0) et T^{1/2−b} (b > 0)
"""
import math

import numpy as np
import pytest

from spectral_core import (
    FourierField,
    ProjectorMode,
    RadiusMismatchError,
    ResolutionError,
    SnapshotFormatError,
    SpaceTimeField,
    UnrepresentableBlockError,
    XsbParams,
    ZeroDenominatorError,
    block_points,
    bump,
    disc_mask,
    dyadic_block_mask,
    field_from_bytes,
    field_to_bytes,
    from_physical,
    hs_norm,
    l2_norm,
    linear_flow,
    lp_spacetime_norm,
    physical_l2_norm,
    physical_values,
    project,
    projector_mask,
    restrict_radius,
    single_mode,
    squared_modulus,
    strichartz_ratio,
    windowed_flow,
    xsb_norm,
    zeros,
)


def _random_field(radius: int, seed: int = 7) -> FourierField:
    rng = np.random.default_rng(seed)
    side = 2 * radius + 1
    return FourierField(radius, rng.standard_normal((side, side)) + 1j * rng.standard_normal((side, side)))


def test_lattice_blocks():
    """Test 1: Disques et blocs dyadiques du réseau"""
    assert disc_mask(1).sum() == 5
    assert disc_mask(2).sum() == 13
    # Q_1 = {|n| ≤ 1}, Q_2 = {1 < |n| ≤ 2}
    assert dyadic_block_mask(4, 1).sum() == 5
    assert dyadic_block_mask(4, 2).sum() == 8
    pts = block_points(2)
    assert len(pts) == 8
    assert [tuple(p) for p in pts] == sorted(tuple(p) for p in pts)
    k2 = np.sum(pts * pts, axis=1)
    assert np.all((k2 > 1) & (k2 <= 4))


def test_fourier_field_disc():
    """Test 2: FourierField annule les coefficients hors disque"""
    f = FourierField(1, np.ones((3, 3)))
    assert f.coefficient((1, 0)) == 1.0
    assert f.coefficient((1, 1)) == 0.0
    assert f.coefficient((5, 0)) == 0j
    assert not f.coeffs.flags.writeable

    with pytest.raises(ValueError):
        FourierField(2, np.ones((3, 3)))
    with pytest.raises(RadiusMismatchError):
        zeros(2) + zeros(3)


def test_plancherel_round_trip():
    """Test 3: Plancherel et aller-retour physique/spectral"""
    f = _random_field(4)
    assert physical_l2_norm(f) == pytest.approx(l2_norm(f), rel=1e-12)
    back = from_physical(physical_values(f), 4)
    np.testing.assert_allclose(back.coeffs, f.coeffs, atol=1e-12)


def test_linear_flow():
    """Test 4: Flot libre"""
    f = single_mode(3, (1, 1))
    g = linear_flow(f, 0.3)
    assert g.coefficient((1, 1)) == pytest.approx(np.exp(-0.6j))

    u = _random_field(5)
    assert l2_norm(linear_flow(u, 1.7)) == pytest.approx(l2_norm(u), rel=1e-12)


def test_projectors():
    """Test 5: Projecteurs et erreurs"""
    u = _random_field(4)
    leq = project(u, ProjectorMode.LEQ, 2)
    union = project(u, ProjectorMode.LEQ_DYADIC, 2)
    np.testing.assert_array_equal(leq.coeffs, union.coeffs)

    comp = project(u, ProjectorMode.COMPLEMENT, 2)
    np.testing.assert_allclose((union + comp).coeffs, u.coeffs)

    block = projector_mask(4, ProjectorMode.DYADIC, 4)
    k2 = squared_modulus(4)
    assert np.all(k2[block] > 4) and np.all(k2[block] <= 16)

    with pytest.raises(UnrepresentableBlockError):
        project(u, ProjectorMode.DYADIC, 8)
    with pytest.raises(ValueError):
        project(u, ProjectorMode.DYADIC, 3)
    with pytest.raises(ValueError):
        project(u, ProjectorMode.LEQ, 0)


def test_bump():
    """Test 6: η ≡ 1 sur [−1, 1], nulle hors de [−2, 2]"""
    t = np.array([-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0])
    eta = bump(t)
    np.testing.assert_allclose(eta[2:7], 1.0)
    np.testing.assert_allclose(eta[[0, 1, 7, 8]], 0.0)
    mid = bump(np.array([1.5, -1.5]))
    assert 0.0 < mid[0] < 1.0
    assert mid[0] == pytest.approx(mid[1])


def test_xsb_norm():
    """Test 7: s = b = 0 donne la norme L² discrète; pas de temps trop grossier"""
    f = _random_field(3)
    u = windowed_flow(f, 0.5)
    discrete = math.sqrt(u.dt * float(np.sum(np.abs(u.values) ** 2)))
    assert xsb_norm(u, XsbParams(s=0.0, b=0.0)) == pytest.approx(discrete, rel=1e-9)
    # la norme croît avec b
    assert xsb_norm(u, XsbParams.default()) > discrete

    times = np.arange(5, dtype=float)
    coarse = SpaceTimeField.from_frames(times, [f] * 5)
    with pytest.raises(ResolutionError):
        xsb_norm(coarse, XsbParams.default())


def test_strichartz_ratio():
    """Test 8: Un mode pur a |e^{itΔ}e_n| ≡ 1, donc un rapport 1"""
    f = single_mode(4, (1, 0))
    assert strichartz_ratio(f, 4) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ZeroDenominatorError):
        strichartz_ratio(zeros(4), 4)


def test_snapshot_bytes():
    """Test 9: Snapshots binaires"""
    f = _random_field(2)
    blob = field_to_bytes(f)
    assert len(blob) == 4 + 25 * 8
    back = field_from_bytes(blob)
    assert back.grid_radius == 2
    np.testing.assert_allclose(back.coeffs, f.coeffs, rtol=1e-6, atol=1e-6)

    with pytest.raises(SnapshotFormatError):
        field_from_bytes(blob[:-8])
    with pytest.raises(SnapshotFormatError):
        field_from_bytes(b"\x01")


def test_hs_and_spacetime_norms():
    """Test 10: H^s, restriction de rayon et L^p espace-temps"""
    f = single_mode(3, (1, 2), amplitude=2.0)
    assert hs_norm(f, 0.0) == pytest.approx(2.0)
    assert hs_norm(f, 1.0) == pytest.approx(2.0 * math.sqrt(6.0))

    g = _random_field(3)
    small = restrict_radius(g, 2)
    np.testing.assert_allclose(small.coeffs, np.where(disc_mask(2), g.coeffs[1:6, 1:6], 0.0))
    back = restrict_radius(small, 3)
    assert l2_norm(back) == pytest.approx(l2_norm(small))

    times = np.linspace(0.0, 1.0, 11)
    one = single_mode(2, (0, 0))
    const = SpaceTimeField(times, np.stack([one.coeffs] * len(times)), 2)
    for p in (1.0, 2.0, 4.0):
        assert lp_spacetime_norm(const, p) == pytest.approx(1.0, rel=1e-12)

    frames = [linear_flow(g, t) for t in times]
    flowed = SpaceTimeField.from_frames(times, frames)
    assert lp_spacetime_norm(flowed, 2.0) == pytest.approx(l2_norm(g), rel=1e-9)
    with pytest.raises(ValueError):
        lp_spacetime_norm(flowed, math.inf)


def test_xsb_single_mode_shift():
    """Test 11: ‖η_T e^{−it|n0|²} a e_{n0}‖_{X^{s,b}} = |a| ⟨n0⟩^s ‖⟨τ⟩^b η̂_T‖"""
    params = XsbParams(s=0.3, b=0.51)
    a, n0, T = 0.8 - 0.6j, (1, 2), 0.5
    shifted = xsb_norm(windowed_flow(single_mode(3, n0, a), T), params)
    # mode nul au même rayon: même grille en temps, modulation τ
    eta = xsb_norm(windowed_flow(single_mode(3, (0, 0)), T), params)
    assert shifted == pytest.approx(abs(a) * 6.0 ** (params.s / 2) * eta, rel=1e-5)

    # b = 0: ‖η_T‖_{L²} à la même grille
    flat = xsb_norm(windowed_flow(single_mode(3, n0, a), T), XsbParams(s=0.0, b=0.0))
    u = windowed_flow(single_mode(3, (0, 0)), T)
    assert flat == pytest.approx(abs(a) * math.sqrt(u.dt * float(np.sum(u.window.eta_samples ** 2))), rel=1e-9)


def test_xsb_monotone():
    """Test 12: ⟨n⟩ ≥ 1 et ⟨τ + |n|²⟩ ≥ 1, donc la norme croît en s et en b"""
    u = windowed_flow(_random_field(3, seed=12), 0.5)
    by_s = [xsb_norm(u, XsbParams(s=s, b=0.51)) for s in (0.0, 0.1, 0.5, 1.0)]
    by_b = [xsb_norm(u, XsbParams(s=0.1, b=b)) for b in (0.0, 0.25, 0.49, 0.51, 0.75)]
    assert all(x < y for x, y in zip(by_s, by_s[1:]))
    assert all(x < y for x, y in zip(by_b, by_b[1:]))


def test_xsb_time_localization():
    """Test 13: ‖η_T‖_{H^b} vaut √T·‖η‖ à b = 0 et reste sous T^{1/2−b}‖η‖_{H^b} pour T ≤ 1"""
    one = single_mode(1, (0, 0))
    Ts = (0.125, 0.25, 0.5, 1.0)

    flat = [xsb_norm(windowed_flow(one, T), XsbParams(s=0.0, b=0.0)) / math.sqrt(T) for T in Ts]
    for value in flat[1:]:
        assert value == pytest.approx(flat[0], rel=1e-4)

    b = 0.51
    norms = {T: xsb_norm(windowed_flow(one, T), XsbParams(s=0.0, b=b)) for T in Ts}
    scaled = [norms[T] / math.sqrt(T) for T in Ts]
    assert all(x > y for x, y in zip(scaled, scaled[1:]))
    for T in Ts[:-1]:
        assert norms[T] <= T ** (0.5 - b) * norms[1.0] * (1 + 1e-4)
        assert norms[T] >= math.sqrt(T) * flat[0] * (1 - 1e-4)
