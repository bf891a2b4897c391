import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgscatter import grid as G


def random_field(g, arity, seed=0):
    rng = np.random.default_rng(seed)
    shape = g.shape(arity)
    return G.ComplexField(g, rng.normal(size=shape) + 1j * rng.normal(size=shape)) if arity == 1 else \
        G.ComplexField2P(g, rng.normal(size=shape) + 1j * rng.normal(size=shape))


@pytest.mark.parametrize("d,n,L", [(1, 16, 1.0), (1, 512, 110.0), (2, 32, 5.0)])
def test_lattice_layout(d, n, L):
    g = G.make_grid(d, n, L)
    assert g.x[0] == -L
    assert np.isclose(g.x[-1], L - g.dx)
    # FFT order: p_k = pi k / L with k = 0..n/2-1, -n/2..-1
    k = np.concatenate([np.arange(n // 2), np.arange(-n // 2, 0)])
    np.testing.assert_allclose(g.p, np.pi * k / L, rtol=0, atol=1e-12)
    assert np.isclose(g.p_nyquist, np.pi / g.dx)


@pytest.mark.parametrize("bad", [dict(d=3, n=32, L=1.0), dict(d=1, n=24, L=1.0), dict(d=1, n=8, L=1.0),
                                 dict(d=1, n=32, L=0.0)])
def test_grid_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        G.make_grid(**bad)


def test_gaussian_transform_matches_closed_form():
    # exp(-x^2/2) is its own transform under the unitary convention
    g = G.make_grid(1, 256, 20.0)
    f = G.ComplexField(g, np.exp(-g.x ** 2 / 2))
    fh = G.fourier_forward(f)
    np.testing.assert_allclose(fh, np.exp(-g.p ** 2 / 2), atol=1e-13)


def test_shift_becomes_phase():
    g = G.make_grid(1, 256, 20.0)
    a = 1.5
    f = G.ComplexField(g, np.exp(-(g.x - a) ** 2 / 2))
    expected = np.exp(-g.p ** 2 / 2) * np.exp(-1j * g.p * a)
    np.testing.assert_allclose(G.fourier_forward(f), expected, atol=1e-12)


@pytest.mark.parametrize("d,arity", [(1, 1), (1, 2), (2, 1)])
def test_parseval_and_round_trip(d, arity):
    g = G.make_grid(d, 64 if d == 1 else 32, 7.0)
    f = random_field(g, arity, seed=3)
    fh = G.fourier_forward(f)
    n1 = G.l2_norm(f)
    assert abs(G.momentum_norm(g, fh, arity) - n1) / n1 < 1e-12
    back = G.fourier_inverse(g, fh, arity)
    assert G.l2_norm(back - f) / n1 < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), log_n=st.integers(4, 8), L=st.floats(0.5, 500.0))
def test_parseval_property(seed, log_n, L):
    g = G.make_grid(1, 2 ** log_n, L)
    f = random_field(g, 1, seed)
    n1 = G.l2_norm(f)
    assert abs(G.momentum_norm(g, G.fourier_forward(f)) - n1) <= 1e-12 * n1


def test_inner_product_conjugate_linear_in_first_slot():
    g = G.make_grid(1, 32, 3.0)
    a, b = random_field(g, 1, 1), random_field(g, 1, 2)
    assert np.isclose(G.inner_product(a * 2j, b), -2j * G.inner_product(a, b))
    assert np.isclose(G.inner_product(a, a).real, G.l2_norm(a) ** 2)


def test_field_shape_and_grid_checks():
    g = G.make_grid(1, 32, 3.0)
    with pytest.raises(ValueError):
        G.ComplexField(g, np.zeros(16))
    other = G.make_grid(1, 32, 4.0)
    with pytest.raises(G.GridMismatchError):
        G.zeros(g) + G.zeros(other)
    with pytest.raises(G.GridMismatchError):
        G.zeros(g, 2) - G.ComplexField2P(other, np.zeros(other.shape(2)))


def test_field_values_are_read_only():
    f = G.zeros(G.make_grid(1, 16, 1.0))
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_fft_workers_does_not_change_results():
    g = G.make_grid(1, 64, 7.0)
    f = random_field(g, 2, seed=5)
    a = G.fourier_forward(f)
    G.set_fft_workers(2)
    try:
        b = G.fourier_forward(f)
    finally:
        G.set_fft_workers(1)
    np.testing.assert_array_equal(a, b)
