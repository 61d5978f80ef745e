import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phonon_bus import chain as ch

MASS = 40 * ch.AMU
W = 2 * np.pi * 1e6


def test_equilibrium_small_chains():
    assert ch.equilibrium_positions(1) == pytest.approx([0.0])
    u2 = ch.equilibrium_positions(2)
    assert u2 == pytest.approx([-(0.25) ** (1 / 3), 0.25 ** (1 / 3)], rel=1e-12)
    u3 = ch.equilibrium_positions(3)
    c = 1.25 ** (1 / 3)
    assert u3 == pytest.approx([-c, 0.0, c], rel=1e-12, abs=1e-14)
    assert u3[2] == pytest.approx(1.0772, abs=1e-4)


@pytest.mark.parametrize("N", [2, 5, 17, 40, 100])
def test_force_balance_residual(N):
    u = ch.equilibrium_positions(N)
    assert np.max(np.abs(ch.force_residual(u))) < 1e-12
    assert np.allclose(u, -u[::-1], atol=1e-12)
    assert np.all(np.diff(u) > 0)


def test_mode_frequencies_analytic():
    m2 = ch.normal_modes(ch.IonChain(2, MASS, W))
    assert m2[1].ratio == pytest.approx(np.sqrt(3), rel=1e-10)
    m3 = ch.normal_modes(ch.IonChain(3, MASS, W))
    assert [m.ratio for m in m3] == pytest.approx([1, np.sqrt(3), np.sqrt(29 / 5)], rel=1e-10)
    assert m3[2].ratio == pytest.approx(2.4083, abs=1e-4)
    assert m3[0].omega_p == W


@pytest.mark.parametrize("N", [1, 2, 3, 8, 30])
def test_mode_vectors(N):
    modes = ch.normal_modes(ch.IonChain(N, MASS, W))
    B = np.array([m.b for m in modes])
    assert np.max(np.abs(B @ B.T - np.eye(N))) < 1e-10
    assert np.allclose(modes[0].b, 1 / np.sqrt(N), atol=1e-12)
    assert np.sum(modes[0].b) == pytest.approx(np.sqrt(N))
    for m in modes[1:]:
        assert abs(np.sum(m.b)) < 1e-10
        first = m.b[np.flatnonzero(np.abs(m.b) > 1e-12)[0]]
        assert first > 0
    w = [m.omega_p for m in modes]
    assert np.all(np.diff(w) > 0)


def test_lamb_dicke():
    chain = ch.IonChain(3, MASS, W)
    modes = ch.normal_modes(chain)
    k = 2 * np.pi / 729e-9
    com = ch.lamb_dicke(chain, modes[0], k)
    assert com == pytest.approx(np.full(3, k * np.sqrt(ch.HBAR / (2 * 3 * MASS * W))), rel=1e-12)
    for m in modes[1:]:
        assert abs(ch.lamb_dicke(chain, m, k).sum()) < 1e-10 * k
    # 1/sqrt(omega_p) scaling for the same eigenvector
    fake = ch.ModeSpec(1, 4 * W, modes[0].b, W)
    assert ch.lamb_dicke(chain, fake, k) == pytest.approx(com / 2)
    with pytest.raises(ValueError):
        ch.lamb_dicke(chain, modes[0], -1.0)


def test_chain_validation():
    with pytest.raises(ValueError):
        ch.IonChain(0, MASS, W)
    with pytest.raises(ValueError):
        ch.IonChain(2, MASS, -W)


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 12), st.floats(0.1, 10.0))
def test_dimensionless_scale_invariance(N, factor):
    a = ch.normal_modes(ch.IonChain(N, MASS, W))
    b = ch.normal_modes(ch.IonChain(N, MASS, W * factor))
    assert [m.ratio for m in a] == pytest.approx([m.ratio for m in b], rel=1e-12)
    c1 = ch.IonChain(N, MASS, W)
    c2 = ch.IonChain(N, MASS, 2 * W)
    # dimensionless spacings unchanged; metres scale as omega^(-2/3)
    assert c2.positions() == pytest.approx(c1.positions() * 2 ** (-2 / 3), rel=1e-12)


def test_min_spacing_decreases():
    s = [ch.min_spacing(n) for n in (2, 3, 4)]
    assert s[0] > s[1] > s[2]


def test_spacing_exponent_needs_range():
    with pytest.raises(ValueError):
        ch.spacing_exponent(range(2, 20))
