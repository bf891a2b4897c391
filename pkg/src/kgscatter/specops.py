"""Pseudo-differential operators realised as Fourier multipliers on the momentum lattice."""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import grid as _g
from .grid import ComplexField, ComplexField2P, GridMismatchError


@dataclass(frozen=True, eq=False)
class Multiplier:
    """Symbol sampled on the momentum lattice (FFT order), one- or two-particle."""

    grid: _g.GridSpec
    arity: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.shape != self.grid.shape(self.arity):
            s = np.broadcast_to(s, self.grid.shape(self.arity))
        s = np.array(s)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def is_real(self):
        return not np.iscomplexobj(self.samples) or np.all(self.samples.imag == 0)

    def __call__(self, f):
        return apply_multiplier(self, f)

    def __mul__(self, other):
        if isinstance(other, Multiplier):
            _check_arity(self, other.grid, other.arity)
            return Multiplier(self.grid, self.arity, self.samples * other.samples)
        return Multiplier(self.grid, self.arity, self.samples * other)


@dataclass(frozen=True, eq=False)
class PositionMap:
    """Pointwise multiplication by a function sampled on the spatial grid."""

    grid: _g.GridSpec
    arity: int
    samples: np.ndarray = field(repr=False)

    def __call__(self, f):
        _check_arity(self, f.grid, f.arity)
        return f.with_values(self.samples * f.values)


def _check_arity(op, grid, arity):
    if op.grid != grid or op.arity != arity:
        raise GridMismatchError(
            f"operator acts on {op.grid} (arity {op.arity}), field lives on {grid} (arity {arity})"
        )


def _check_mass(m):
    if not m > 0:
        raise ValueError(f"mass must be positive, got {m}")


def omega(p, m):
    return np.sqrt(p * p + m * m)


def omega_array(grid, m, arity=1):
    """omega summed over particles: omega(p) for arity 1, omega(p1)+omega(p2) for arity 2."""
    axes = grid.p_axes(arity)
    d = grid.d
    out = 0.0
    for k in range(arity):
        p2 = sum(a * a for a in axes[k * d:(k + 1) * d])
        out = out + np.sqrt(p2 + m * m)
    return np.broadcast_to(out, grid.shape(arity))


def grad_omega_arrays(grid, m, arity=1):
    """Group-velocity components p_j / omega(p) for every axis (d*arity arrays)."""
    axes = grid.p_axes(arity)
    d = grid.d
    comps = []
    for k in range(arity):
        block = axes[k * d:(k + 1) * d]
        om = np.sqrt(sum(a * a for a in block) + m * m)
        comps.extend(np.broadcast_to(a / om, grid.shape(arity)) for a in block)
    return comps


def omega_multiplier(grid, m):
    _check_mass(m)
    return Multiplier(grid, 1, omega_array(grid, m, 1))


def omega_tilde_multiplier(grid, m):
    _check_mass(m)
    return Multiplier(grid, 2, omega_array(grid, m, 2))


def grad_omega_multiplier(grid, m, arity=1):
    _check_mass(m)
    return tuple(Multiplier(grid, arity, c) for c in grad_omega_arrays(grid, m, arity))


def apply_multiplier(mult, f):
    _check_arity(mult, f.grid, f.arity)
    vals = sfft.ifftn(mult.samples * sfft.fftn(f.values, workers=_g.FFT_WORKERS), workers=_g.FFT_WORKERS)
    return f.with_values(vals)


def propagator_array(samples, t):
    return np.exp(-1j * t * samples)


def free_propagator(mult, t):
    """The unitary map f -> exp(-i t mult(D)) f."""
    if not mult.is_real:
        raise ValueError("free propagator needs a real symbol")
    phase = Multiplier(mult.grid, mult.arity, propagator_array(np.real(mult.samples), t))

    def propagate(f):
        return apply_multiplier(phase, f)

    return propagate


def _velocity_coords(grid, arity, t):
    return [ax / t for ax in grid.x_axes(arity)]


def sample_scaled(h, grid, t, arity=1):
    """Samples of h(x/t) on the spatial grid (h takes a (d, ...) coordinate stack)."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    coords = _velocity_coords(grid, arity, t)
    d = grid.d
    if arity == 1:
        vals = h(np.stack(np.broadcast_arrays(*coords)))
    else:
        h1, h2 = h if isinstance(h, (tuple, list)) else (h, None)
        if h2 is None:
            vals = h1(np.stack(np.broadcast_arrays(*coords)))
        else:
            # product form keeps the sparse factorisation cheap
            a = h1(np.stack(np.broadcast_arrays(*coords[:d])))
            b = h2(np.stack(np.broadcast_arrays(*coords[d:])))
            vals = a * b
    return np.broadcast_to(vals, grid.shape(arity))


def position_cutoff_scaled(h, t, grid, arity=1):
    """Pointwise multiplication by h(x/t); for arity 2 pass (h1, h2) or a joint function."""
    return PositionMap(grid, arity, sample_scaled(h, grid, t, arity))


def _eval_velocity(h, comps):
    return h(np.stack(np.broadcast_arrays(*comps)))


def velocity_cutoff_array(h, m, grid, arity=1):
    _check_mass(m)
    comps = grad_omega_arrays(grid, m, arity)
    d = grid.d
    if arity == 1:
        return np.broadcast_to(_eval_velocity(h, comps), grid.shape(1))
    h1, h2 = h
    return np.broadcast_to(
        _eval_velocity(h1, comps[:d]) * _eval_velocity(h2, comps[d:]), grid.shape(2)
    )


def velocity_cutoff(h, m, grid, arity=1):
    """Multiplier h(grad omega(D)); for arity 2, h = (h1, h2) gives h1(v1) h2(v2)."""
    return Multiplier(grid, arity, velocity_cutoff_array(h, m, grid, arity))


def field_cls(arity):
    return ComplexField if arity == 1 else ComplexField2P
