import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gibbsfht.lattice import Geometry, PotentialSpec, build_potential, energy, grad

VARIANTS = [
    PotentialSpec(Geometry.CHAIN_1D, 16, 0.1),
    PotentialSpec(Geometry.CHAIN_1D, 16, 0.5, 0.01),
    PotentialSpec(Geometry.GRID_2D, 16, 0.125),
    PotentialSpec(Geometry.GRID_2D, 16, 0.125, 0.01),
]


def loop_energy(spec, x):
    """Reference energy from an explicit list of unordered periodic bonds."""
    h, lam, a = spec.h, spec.lam, spec.cubic_a
    if spec.geometry is Geometry.CHAIN_1D:
        bonds = [(i, (i + 1) % spec.d) for i in range(spec.d)]
        power = 1
    else:
        m = spec.side
        bonds = []
        for r, c in itertools.product(range(m), range(m)):
            bonds.append((r * m + c, r * m + (c + 1) % m))
            bonds.append((r * m + c, ((r + 1) % m) * m + c))
        power = 2
    kinetic = sum(((x[v] - x[w]) / h) ** 2 for v, w in bonds)
    local = sum((1 - t * t) ** 2 + a * t**3 for t in x)
    return h**power * (lam / 2 * kinetic + local / (4 * lam))


def test_paper_weak_coupling_chain():
    pot = build_potential(PotentialSpec(Geometry.CHAIN_1D, 256, 0.1))
    assert pot.spec.h == 1 / 256
    assert pot.spec.lam == pytest.approx(0.1 / 256)
    assert pot.energy(np.ones(256)) == 0.0


def test_paper_asymmetric_grid():
    spec = PotentialSpec(Geometry.GRID_2D, 256, 0.125, 0.01)
    assert spec.side == 16 and spec.h == 1 / 16
    pot = build_potential(spec)
    x = np.random.default_rng(0).standard_normal(256)
    assert pot.energy(x) == pytest.approx(loop_energy(spec, x), rel=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(geometry=Geometry.GRID_2D, d=6, lambda_factor=0.1),
        dict(geometry=Geometry.CHAIN_1D, d=1, lambda_factor=0.1),
        dict(geometry=Geometry.CHAIN_1D, d=8, lambda_factor=0.0),
        dict(geometry=Geometry.CHAIN_1D, d=8, lambda_factor=-1.0),
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        PotentialSpec(**kwargs)


@pytest.mark.parametrize("d", [2, 4, 32, 256])
def test_symmetric_minimum_has_zero_energy(d):
    pot = build_potential(PotentialSpec(Geometry.CHAIN_1D, d, 0.1))
    assert energy(pot, np.ones(d)) == 0.0
    assert energy(pot, -np.ones(d)) == 0.0


def test_alternating_chain_energy():
    pot = build_potential(PotentialSpec(Geometry.CHAIN_1D, 4, 0.1))
    assert energy(pot, np.array([1.0, -1.0, 1.0, -1.0])) == pytest.approx(0.8, rel=1e-14)


def test_checkerboard_grid_energy():
    spec = PotentialSpec(Geometry.GRID_2D, 16, 0.125)
    x = np.array([(-1.0) ** (r + c) for r in range(4) for c in range(4)])
    # 2d unordered bonds, each with difference 2
    expected = spec.h**2 * spec.lam / 2 * 2 * 16 * (2 / spec.h) ** 2
    assert build_potential(spec).energy(x) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("spec", VARIANTS, ids=str)
def test_energy_matches_bond_list(spec):
    pot = build_potential(spec)
    rng = np.random.default_rng(1)
    for x in rng.normal(0, 1.2, (5, spec.d)):
        assert pot.energy(x) == pytest.approx(loop_energy(spec, x), rel=1e-12)


def test_batched_energy_and_grad():
    pot = build_potential(VARIANTS[3])
    x = np.random.default_rng(2).standard_normal((3, 4, 16))
    e = pot.energy(x)
    assert e.shape == (3, 4)
    assert e[1, 2] == pytest.approx(pot.energy(x[1, 2]))
    np.testing.assert_allclose(pot.grad(x)[2, 3], pot.grad(x[2, 3]))


def test_dimension_mismatch():
    pot = build_potential(VARIANTS[0])
    with pytest.raises(ValueError):
        pot.energy(np.zeros(15))
    with pytest.raises(ValueError):
        pot.grad(np.zeros(17))


def test_gradient_zero_at_symmetric_minimum():
    for spec in (VARIANTS[0], VARIANTS[2]):
        np.testing.assert_array_equal(grad(build_potential(spec), np.ones(spec.d)), 0.0)


def test_asymmetric_gradient_at_plus_state():
    spec = PotentialSpec(Geometry.CHAIN_1D, 32, 0.5, 0.01)
    g = build_potential(spec).grad(np.ones(32))
    np.testing.assert_allclose(g, spec.h / (4 * spec.lam) * 3 * 0.01, rtol=1e-14)


@pytest.mark.parametrize("spec", VARIANTS, ids=str)
def test_gradient_matches_finite_differences(spec):
    pot = build_potential(spec)
    rng = np.random.default_rng(3)
    step = 1e-5
    eye = np.eye(spec.d)
    for x in rng.normal(0, 1, (20, spec.d)):
        fd = np.array([(pot.energy(x + step * e) - pot.energy(x - step * e)) / (2 * step)
                       for e in eye])
        g = pot.grad(x)
        assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-6


finite_states = arrays(np.float64, 16, elements=st.floats(-3, 3, allow_nan=False))


@settings(max_examples=50, deadline=None)
@given(finite_states, st.integers(0, 15))
def test_chain_translation_invariance(x, shift):
    pot = build_potential(VARIANTS[1])
    assert pot.energy(np.roll(x, shift)) == pytest.approx(pot.energy(x), rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(finite_states, st.integers(0, 3), st.integers(0, 3))
def test_grid_translation_invariance(x, dr, dc):
    pot = build_potential(VARIANTS[3])
    shifted = np.roll(x.reshape(4, 4), (dr, dc), axis=(0, 1)).ravel()
    assert pot.energy(shifted) == pytest.approx(pot.energy(x), rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(finite_states, st.sampled_from([VARIANTS[0], VARIANTS[2]]))
def test_spin_flip_symmetry(x, spec):
    pot = build_potential(spec)
    assert pot.energy(-x) == pot.energy(x)
    np.testing.assert_array_equal(pot.grad(-x), -pot.grad(x))


@pytest.mark.parametrize("spec", VARIANTS, ids=str)
def test_constant_field_is_pure_local_term(spec):
    pot = build_potential(spec)
    for c in (0.0, 0.5, 1.3, -0.7):
        direct = spec.h**spec.dim / (4 * spec.lam) * spec.d * ((1 - c * c) ** 2 + spec.cubic_a * c**3)
        assert pot.energy(np.full(spec.d, c)) == pytest.approx(direct, rel=1e-13, abs=1e-15)


def test_doubling_residuals_quadruples_local_term():
    spec = PotentialSpec(Geometry.CHAIN_1D, 8, 0.1)
    pot = build_potential(spec)
    # constant fields have no bond energy; residual 1 - c^2 doubles from 0.25 to 0.5
    c1, c2 = np.sqrt(0.75), np.sqrt(0.5)
    assert pot.energy(np.full(8, c2)) == pytest.approx(4 * pot.energy(np.full(8, c1)), rel=1e-13)
