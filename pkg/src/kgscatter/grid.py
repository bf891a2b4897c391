"""Periodic-box discretisation of one- and two-particle configuration space.

Fourier convention (unitary, continuum normalised)::

    f_hat(p) = (2 pi)^(-d/2) * integral exp(-i p.x) f(x) dx

realised on the box ``[-L, L)^d`` with ``n`` points per axis.  Momentum
samples live in FFT order (``scipy.fft.fftfreq``), i.e. ``p_k = pi k / L``
with ``k = 0, 1, ..., n/2 - 1, -n/2, ..., -1``.  Norms carry the cell volume
``dx^dim`` in position space and ``(pi / L)^dim`` in momentum space so that
Parseval holds exactly between the two weighted sums.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

FFT_WORKERS = 1


def set_fft_workers(n):
    """Bound the worker count used by every transform (the CLI ``--jobs`` flag)."""
    global FFT_WORKERS
    FFT_WORKERS = max(1, int(n))


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def dx(self):
        return 2.0 * self.L / self.n

    @property
    def dp(self):
        return np.pi / self.L

    @cached_property
    def x(self):
        """Position samples along one axis, ascending from -L."""
        return -self.L + self.dx * np.arange(self.n)

    @cached_property
    def p(self):
        """Momentum samples along one axis in FFT order."""
        return 2.0 * np.pi * sfft.fftfreq(self.n, d=self.dx)

    @property
    def p_sorted(self):
        return np.sort(self.p)

    @property
    def p_nyquist(self):
        return np.pi / self.dx

    def shape(self, arity=1):
        return (self.n,) * (self.d * arity)

    def x_axes(self, arity=1):
        """Open mesh of position coordinates, one array per axis (length d*arity)."""
        return np.meshgrid(*([self.x] * (self.d * arity)), indexing="ij", sparse=True)

    def p_axes(self, arity=1):
        return np.meshgrid(*([self.p] * (self.d * arity)), indexing="ij", sparse=True)

    def cell(self, arity=1):
        return self.dx ** (self.d * arity)

    def momentum_cell(self, arity=1):
        return self.dp ** (self.d * arity)

    def _phase(self, arity):
        # e^{i p L} per axis turns the DFT index origin into x = -L
        ph = np.exp(1j * self.p * self.L)
        axes = [ph.reshape((-1,) + (1,) * (self.d * arity - 1 - k)) for k in range(self.d * arity)]
        out = axes[0]
        for a in axes[1:]:
            out = out * a
        return out

    def as_dict(self):
        return {"d": self.d, "n": self.n, "L": self.L}


def make_grid(d, n, L):
    return GridSpec(int(d), int(n), float(L))


@dataclass(frozen=True, eq=False)
class ComplexField:
    """One-particle amplitude sampled on ``grid`` (position representation)."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)
    arity = 1

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape(self.arity):
            raise ValueError(
                f"values shape {vals.shape} does not match grid shape {self.grid.shape(self.arity)}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values):
        return type(self)(self.grid, values)

    def __add__(self, other):
        _check_same(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__


class ComplexField2P(ComplexField):
    """Two-particle amplitude over (x1, x2); axes ordered x1 components then x2 components."""

    arity = 2


def _check_same(a, b):
    if a.grid != b.grid or a.arity != b.arity:
        raise GridMismatchError(f"field grids differ: {a.grid}/{a.arity} vs {b.grid}/{b.arity}")


def zeros(grid, arity=1):
    cls = ComplexField if arity == 1 else ComplexField2P
    return cls(grid, np.zeros(grid.shape(arity), dtype=complex))


def l2_norm(field):
    return float(np.sqrt(np.sum(np.abs(field.values) ** 2) * field.grid.cell(field.arity)))


def inner_product(a, b):
    """<a, b>, conjugate-linear in the first slot."""
    _check_same(a, b)
    return complex(np.vdot(a.values, b.values) * a.grid.cell(a.arity))


def momentum_norm(grid, values_hat, arity=1):
    return float(np.sqrt(np.sum(np.abs(values_hat) ** 2) * grid.momentum_cell(arity)))


def fft_array(grid, values, arity=1):
    """Continuum-normalised forward transform of a raw array."""
    dim = grid.d * arity
    scale = grid.cell(arity) * (2.0 * np.pi) ** (-dim / 2.0)
    return sfft.fftn(values, workers=FFT_WORKERS) * (scale * grid._phase(arity))


def ifft_array(grid, values_hat, arity=1):
    dim = grid.d * arity
    scale = (2.0 * np.pi) ** (dim / 2.0) / grid.cell(arity)
    return sfft.ifftn(values_hat * (np.conj(grid._phase(arity)) * scale), workers=FFT_WORKERS)


def fourier_forward(field):
    """Momentum-space samples (FFT order) of ``field``, as a raw array."""
    return fft_array(field.grid, field.values, field.arity)


def fourier_inverse(grid, values_hat, arity=1):
    cls = ComplexField if arity == 1 else ComplexField2P
    return cls(grid, ifft_array(grid, values_hat, arity))
