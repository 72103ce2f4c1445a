import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wienerlab.grid import FREQUENCY, Field, GridError, make_grid
from wienerlab.norms import sobolev_norm
from wienerlab.randomize import (
    CoeffDistribution,
    constant_draw,
    encode_lattice,
    keyed_uniforms,
    make_rough_data,
    philox4x32,
    randomize,
    randomize_batch,
    require_subgaussian,
    sample,
    sample_values,
    verify_subgaussian,
)
from wienerlab.wiener import CubeIndexSet, build_psi, cube_index_set, cube_l2_masses

LAWS = ("gaussian", "bernoulli", "uniform")


@pytest.fixture(scope="module")
def psi():
    return build_psi(0.25)


# --- Philox ---------------------------------------------------------------


@pytest.mark.parametrize(
    "ctr, key, out",
    [
        ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
        ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
        (
            (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
            (0xA4093822, 0x299F31D0),
            (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1),
        ),
    ],
)
def test_philox_known_answers(ctr, key, out):
    # Random123 known-answer vectors for philox4x32-10
    got = tuple(int(v) for v in philox4x32(ctr, key))
    assert got == out


def test_keyed_uniforms_range_and_independence():
    u1, u2 = keyed_uniforms(5, np.arange(200_000), 0)
    for u in (u1, u2):
        assert 0 < u.min() and u.max() < 1
        assert abs(u.mean() - 0.5) < 5 * np.sqrt(1 / 12 / u.size)
    assert abs(np.corrcoef(u1, u2)[0, 1]) < 5 / np.sqrt(u1.size)
    a, _ = keyed_uniforms(5, 0, 0, tag=0)
    b, _ = keyed_uniforms(5, 0, 0, tag=1)
    c, _ = keyed_uniforms(6, 0, 0, tag=0)
    assert a != b and a != c


def test_encode_lattice():
    pts = np.array([[0, 0], [1, -1], [-1, 1]])
    codes = encode_lattice(pts)
    assert len(set(codes.tolist())) == 3
    with pytest.raises(ValueError):
        encode_lattice(np.array([[2**15]]))


# --- sampling -------------------------------------------------------------


@pytest.mark.parametrize("kind", LAWS)
def test_sample_mean_and_second_moment(kind):
    dist = CoeffDistribution(kind)
    g0 = sample_values(dist, CubeIndexSet(1, 0), 1, np.arange(100_000))[:, 0]
    assert abs(g0.mean()) < 5 * 1.0 / np.sqrt(g0.size)
    assert abs(np.mean(np.abs(g0) ** 2) - 1) < 5 * np.std(np.abs(g0) ** 2) / np.sqrt(g0.size) + 1e-12
    assert abs(np.corrcoef(g0.real, g0.imag)[0, 1]) < 5 / np.sqrt(g0.size)


def test_bernoulli_exact():
    g = sample(CoeffDistribution("bernoulli"), CubeIndexSet(2, 3), 9, 4).values
    assert np.all(np.abs(g.real) == np.sqrt(0.5)) and np.all(np.abs(g.imag) == np.sqrt(0.5))
    assert np.allclose(np.abs(g) ** 2, 1, atol=1e-15)


def test_uniform_support():
    dist = CoeffDistribution("uniform")
    g = sample_values(dist, CubeIndexSet(1, 0), 2, np.arange(50_000)).ravel()
    a = dist.support_radius
    assert np.abs(g.real).max() <= a and np.abs(g.imag).max() <= a
    assert a**2 / 3 == pytest.approx(0.5)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_gaussian_mgf(gamma):
    g0 = sample_values(CoeffDistribution("gaussian"), CubeIndexSet(1, 0), 3, np.arange(10**6))[:, 0]
    e = np.exp(gamma * g0.real)
    se = e.std(ddof=1) / np.sqrt(e.size)
    assert abs(e.mean() - np.exp(gamma**2 / 4)) < 3 * se


def test_draw_reproducible_and_order_independent():
    dist = CoeffDistribution("gaussian")
    cubes = CubeIndexSet(2, 3)
    a = sample(dist, cubes, 42, 7).values
    b = sample(dist, cubes, 42, 7).values
    assert np.array_equal(a, b)
    batch = sample_values(dist, cubes, 42, [9, 7, 1])
    assert np.array_equal(batch[1], a)
    # a smaller index set reproduces the shared coefficients
    small = sample(dist, CubeIndexSet(2, 1), 42, 7).values
    assert np.array_equal(small, a[2:5, 2:5])
    assert not np.array_equal(sample(dist, cubes, 43, 7).values, a)


def test_sample_rejects_empty():
    class Empty(CubeIndexSet):
        def __len__(self):
            return 0

    with pytest.raises(ValueError):
        sample(CoeffDistribution(), Empty(1, 0), 0, 0)


def test_unknown_law():
    with pytest.raises(ValueError):
        CoeffDistribution("UniformDisc")


# --- subgaussian check ----------------------------------------------------


def test_subgaussian_bernoulli():
    rep = verify_subgaussian(CoeffDistribution("bernoulli"))
    assert rep.passed and rep.method == "analytic"
    # cosh(g sigma) <= exp(g^2 sigma^2 / 2) with sigma^2 = 1/2; the sup of the
    # ratio is the gamma -> 0 limit sigma^2 / 2
    assert 0.24 < rep.c_hat <= 0.25
    g = np.linspace(-10, 10, 2001)
    assert np.all(np.cosh(g * np.sqrt(0.5)) <= np.exp(g**2 / 4) * (1 + 1e-15))


def test_subgaussian_gaussian():
    rep = verify_subgaussian(CoeffDistribution("gaussian"))
    assert rep.passed and rep.c_hat == pytest.approx(0.25, abs=1e-15)


def test_subgaussian_uniform_mc():
    dist = CoeffDistribution("uniform")
    rep = verify_subgaussian(dist, gamma_grid=np.linspace(-4, 4, 41), n_samples=10**6)
    assert rep.method == "monte-carlo" and rep.passed
    # bounded support [-a, a] gives c <= a^2 / 2 (Hoeffding)
    assert rep.c_hat <= dist.support_radius**2 / 2
    # closed-form log-MGF agrees with the Monte Carlo estimate
    u1, u2 = keyed_uniforms(0, np.arange(500_000), 0, tag=7)
    x = dist.from_uniforms(u1, u2).real
    for gm in (0.5, 2.0, 4.0):
        assert np.log(np.mean(np.exp(gm * x))) == pytest.approx(float(dist.log_mgf(gm)), rel=0.02)


def test_subgaussian_refuses_bad_constant():
    bad = CoeffDistribution("uniform", c_sg=0.1)
    assert not verify_subgaussian(bad, n_samples=100_000).passed
    with pytest.raises(ValueError, match="subgaussian"):
        require_subgaussian(bad)
    require_subgaussian(CoeffDistribution("bernoulli"))


# --- randomization --------------------------------------------------------


def test_randomize_all_ones(psi):
    g = make_grid(1, 128, 4)
    phi = make_rough_data(g, 0.5, seed=1)
    out = randomize(phi, constant_draw(cube_index_set(g)), psi)
    assert np.linalg.norm(out.values - phi.values) / np.linalg.norm(phi.values) < 1e-13


@settings(max_examples=20, deadline=None)
@given(theta=st.floats(0, 2 * np.pi))
def test_randomize_constant_phase(theta):
    psi = build_psi(0.25, 2)
    g = make_grid(2, 32, 2)
    phi = make_rough_data(g, 0.5, seed=2, psi=psi)
    out = randomize(phi, constant_draw(cube_index_set(g), np.exp(1j * theta)), psi)
    assert out.l2_norm() == pytest.approx(phi.l2_norm(), rel=1e-13)
    assert np.allclose(out.values, np.exp(1j * theta) * phi.values, atol=1e-13)


def test_randomize_lattice_mismatch(psi):
    g = make_grid(1, 128, 4)
    phi = make_rough_data(g, 0.5)
    draw = sample(CoeffDistribution(), CubeIndexSet(1, 2), 0, 0)
    with pytest.raises(GridError):
        randomize(phi, draw, psi)


def test_randomize_matches_cube_sum(psi):
    # one combined multiplier equals the explicit sum of g_n psi(D - n) phi
    from wienerlab.wiener import project_cube

    g = make_grid(1, 64, 2)
    phi = make_rough_data(g, 0.3, seed=3)
    draw = sample(CoeffDistribution("uniform"), cube_index_set(g), 11, 5)
    direct = sum(c * project_cube(phi, n, psi).values for n, c in zip(draw.cubes, draw.values.ravel()))
    assert np.allclose(randomize(phi, draw, psi).values, direct, atol=1e-12)


@pytest.mark.parametrize("d, M, L", [(1, 64, 2), (2, 16, 1)])
def test_batch_matches_single(d, M, L):
    psi = build_psi(0.25, d)
    g = make_grid(d, M, L)
    phi = make_rough_data(g, 0.5, seed=4, psi=psi)
    dist = CoeffDistribution("bernoulli")
    batch = randomize_batch(phi, dist, psi, 8, [0, 3, 5])
    for i, s in enumerate([0, 3, 5]):
        single = randomize(phi, sample(dist, cube_index_set(g), 8, s), psi).values
        assert np.array_equal(batch[i], single) or np.allclose(batch[i], single, rtol=0, atol=1e-14)


def test_randomize_bit_identical(psi):
    g = make_grid(1, 128, 4)
    phi = make_rough_data(g, 0.5, seed=5)
    dist = CoeffDistribution("gaussian")
    a = randomize(phi, sample(dist, cube_index_set(g), 77, 3), psi).values
    b = randomize(phi, sample(dist, cube_index_set(g), 77, 3), psi).values
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("kind", LAWS)
def test_expected_l2_mass(psi, kind):
    g = make_grid(1, 128, 4)
    phi = make_rough_data(g, 0.5, seed=6)
    spec = randomize_batch(phi, CoeffDistribution(kind), psi, 12, np.arange(10_000), space=FREQUENCY)
    sq = np.sum(np.abs(spec) ** 2, axis=1) * g.lattice_volume
    target = cube_l2_masses(phi, psi).sum()
    se = sq.std(ddof=1) / np.sqrt(sq.size)
    assert abs(sq.mean() - target) < 3 * se


def test_expected_cube_mass(psi):
    # E||psi(D - n) phi^w||^2 = sum_m ||psi(D - n) psi(D - m) phi||^2
    from wienerlab.wiener import cube_symbol

    g = make_grid(1, 128, 4)
    phi = make_rough_data(g, 0.5, seed=7)
    cubes = cube_index_set(g)
    spec = randomize_batch(phi, CoeffDistribution("gaussian"), psi, 13, np.arange(10_000), space=FREQUENCY)
    ph = phi.frequency().values
    for n in (0, 2, -5):
        a = cube_symbol(g, psi, n)
        mc = np.sum(np.abs(spec * a) ** 2, axis=1) * g.lattice_volume
        exact = sum(np.sum(np.abs(a * cube_symbol(g, psi, m) * ph) ** 2) for m in cubes) * g.lattice_volume
        assert abs(mc.mean() - exact) < 3 * mc.std(ddof=1) / np.sqrt(mc.size)


@pytest.mark.parametrize("s", [0.0, 0.5, 0.7])
def test_no_smoothing(psi, s):
    g = make_grid(1, 256, 4)
    phi = make_rough_data(g, 0.8, seed=8)
    spec = randomize_batch(phi, CoeffDistribution("gaussian"), psi, 14, np.arange(500), space=FREQUENCY)
    w = (1 + g.xi_sq) ** s
    vals = np.sqrt(np.sum(w * np.abs(spec) ** 2, axis=1) * g.lattice_volume)
    med = np.median(vals) / sobolev_norm(phi, s)
    assert 1 / 3 <= med <= 3


# --- rough data -----------------------------------------------------------


def test_rough_modulus_and_band(psi):
    g = make_grid(1, 128, 4)
    phi = make_rough_data(g, 0.8, seed=0, amplitude=2.0).frequency()
    expect = 2.0 * (1 + g.xi_sq) ** (-(0.8 + 0.5 + 0.01) / 2)
    from wienerlab.wiener import band_mask

    mask = band_mask(g, psi)
    assert np.allclose(np.abs(phi.values[mask]), expect[mask], rtol=1e-12)
    assert np.all(np.abs(phi.values[~mask]) < 1e-14)


def test_rough_phases_shared_across_M():
    a = make_rough_data(make_grid(1, 64, 2), 0.5, seed=3).frequency()
    b = make_rough_data(make_grid(1, 128, 2), 0.5, seed=3).frequency()
    common = np.isin(b.grid.xi, a.grid.xi) & (np.abs(b.values) > 0)
    ia = np.searchsorted(a.grid.xi, b.grid.xi[common])
    mask_a = np.abs(a.values[ia]) > 1e-10
    assert np.allclose(np.angle(a.values[ia][mask_a]), np.angle(b.values[common][mask_a]), atol=1e-12)


def test_rough_envelope_localizes():
    g = make_grid(1, 512, 4)
    plain = make_rough_data(g, 0.5, seed=1)
    local = make_rough_data(g, 0.5, seed=1, envelope=1.0)
    edge = np.abs(g.x) > 3
    # restoring the band limit after windowing leaves a small ringing floor
    assert np.abs(local.values[edge]).max() < 1e-3 * np.abs(local.values).max()
    assert np.abs(plain.values[edge]).max() > 1e-2 * np.abs(plain.values).max()
    with pytest.raises(ValueError):
        make_rough_data(g, 0.5, envelope=0.0)


def test_rough_smooth_cap():
    for M in (64, 128):
        g = make_grid(1, M, 4)
        u = make_rough_data(g, np.inf, seed=0)
        if M == 64:
            ref = [sobolev_norm(u, s) for s in (0, 1, 3)]
    assert [sobolev_norm(u, s) for s in (0, 1, 3)] == pytest.approx(ref, rel=1e-10)


def test_rough_l2_stable_in_M():
    vals = [make_rough_data(make_grid(1, M, 4), 0.8, seed=0).l2_norm() for M in (128, 256, 512)]
    assert abs(vals[1] / vals[0] - 1) < 0.01 and abs(vals[2] / vals[1] - 1) < 0.005


def rough_4d_ratios(s):
    psi = build_psi(0.25, 4)
    v = [sobolev_norm(make_rough_data(make_grid(4, M, 1), 0.8, seed=0, psi=psi), s) for M in (16, 32)]
    return v[1] / v[0]


def test_rough_4d_above_threshold_grows():
    r = rough_4d_ratios(1.0)
    print(f"H^1 ratio M=32/M=16: {r:.3f}")
    assert r >= 1.2


def test_rough_4d_below_threshold_stable():
    # Documented example: H^0.7 stable within 5% from M=16 to 32. The H^0.7 tail of
    # <xi>^{-(0.8 + 2 + 0.01)} beyond radius R decays only like R^{-0.22}, so
    # doubling the band from |xi| ~ 3.75 to ~ 7.75 moves the norm by ~27%.
    # Kept at the stated tolerance; see the ledger.
    r = rough_4d_ratios(0.7)
    print(f"H^0.7 ratio M=32/M=16: {r:.3f}")
    assert abs(r - 1) <= 0.05
