"""Positive-energy Klein-Gordon wave packets g_t = exp(-i t omega(D)) f with compact Fourier support."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import grid as _g
from . import specops
from .bump import bump, sharp_bump
from .grid import ComplexField, l2_norm
from .series import DiagnosticSeries

ANTI_ALIAS_FRACTION = 2.0 / 3.0
WRAP_MASS_TOL = 1e-8
D2_BOUNDARY_SAMPLES = 256


class PacketError(ValueError):
    pass


class WraparoundError(RuntimeError):
    def __init__(self, msg, required_L):
        super().__init__(msg)
        self.required_L = required_L


@dataclass(frozen=True, eq=False)
class VelocitySupport:
    lo: np.ndarray
    hi: np.ndarray
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def speed_max(self):
        return float(np.max(np.linalg.norm(self.samples, axis=0)))

    def inside_unit_ball(self):
        return self.speed_max < 1.0


@dataclass(frozen=True, eq=False)
class KGWavePacket:
    grid: _g.GridSpec
    m: float
    fourier_data: np.ndarray = field(repr=False)
    center_x0: np.ndarray
    support_lo: np.ndarray
    support_hi: np.ndarray

    @cached_property
    def initial(self):
        return _g.fourier_inverse(self.grid, self.fourier_data, 1)

    @cached_property
    def spread_radius(self):
        """Radius about x0 outside which the packet carries less than WRAP_MASS_TOL of its mass."""
        return self.spread_radius_at(WRAP_MASS_TOL)

    def spread_radius_at(self, mass_tol):
        f = self.initial.values
        dens = np.abs(f) ** 2
        dens = dens / dens.sum()
        rel = [self.grid.x - c for c in self.center_x0]
        # periodic distance to the centre
        rel = [(r + self.grid.L) % (2 * self.grid.L) - self.grid.L for r in rel]
        mesh = np.meshgrid(*rel, indexing="ij")
        dist = np.sqrt(sum(r * r for r in mesh)).ravel()
        order = np.argsort(dist)
        tail = 1.0 - np.cumsum(dens.ravel()[order])
        idx = np.searchsorted(-tail, -mass_tol)
        return float(dist[order][min(idx, len(order) - 1)])

    @property
    def v_max(self):
        return velocity_support(self).speed_max


def make_packet(grid, m, p_center, p_width, x0=0.0, envelope=bump, sharpness=None):
    """Packet with Fourier data envelope((p - p_center)/p_width) exp(-i p.x0), normalised to 1."""
    specops._check_mass(m)
    if sharpness is not None:
        envelope = sharp_bump(sharpness)
    d = grid.d
    pc = np.broadcast_to(np.asarray(p_center, dtype=float), (d,))
    pw = np.broadcast_to(np.asarray(p_width, dtype=float), (d,))
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (d,))
    if np.any(pw <= 0):
        raise PacketError(f"p_width must be positive, got {p_width}")
    lo, hi = pc - pw, pc + pw
    limit = ANTI_ALIAS_FRACTION * grid.p_nyquist
    if np.any(np.abs(lo) > limit) or np.any(np.abs(hi) > limit):
        raise PacketError(
            f"Fourier support [{lo}, {hi}] leaves the anti-aliasing region |p| <= {limit:.6g}"
        )
    axes = grid.p_axes(1)
    fhat = np.ones(grid.shape(1), dtype=complex)
    for j in range(d):
        fhat = fhat * envelope((axes[j] - pc[j]) / pw[j]) * np.exp(-1j * axes[j] * x0[j])
    norm = _g.momentum_norm(grid, fhat, 1)
    if norm == 0:
        raise PacketError("packet support contains no lattice momenta; refine the grid or widen p_width")
    return KGWavePacket(grid, float(m), fhat / norm, x0.copy(), lo, hi)


def reach(packet, t, mass_tol=WRAP_MASS_TOL):
    """Largest |x| the packet can occupy at time t: centre x0 + v t over the velocity support, plus the spread."""
    vs = velocity_support(packet).samples
    pos = packet.center_x0[:, None] + t * vs
    spread = packet.spread_radius if mass_tol == WRAP_MASS_TOL else packet.spread_radius_at(mass_tol)
    return float(np.max(np.linalg.norm(pos, axis=0))) + spread


def _guard(packet, t):
    g = packet.grid
    reach_t = reach(packet, t)
    limit = 0.95 * g.L
    if reach_t >= limit:
        required = reach_t / 0.95
        raise WraparoundError(
            f"packet reaches |x| = {reach_t:.4g} by t = {t:g} but the box allows {limit:.4g}; need L >= {required:.4g}",
            required,
        )


def evolve(packet, t, check=True):
    if check:
        _guard(packet, t)
    om = specops.omega_array(packet.grid, packet.m, 1)
    return _g.fourier_inverse(packet.grid, packet.fourier_data * np.exp(-1j * t * om), 1)


def centroid(f):
    dens = np.abs(f.values) ** 2
    total = dens.sum()
    axes = f.grid.x_axes(1)
    return np.array([float(np.sum(a * dens) / total) for a in axes])


def velocity_support(packet):
    """Image of the Fourier support box under grad omega (exact extremes in d = 1)."""
    lo, hi = packet.support_lo, packet.support_hi
    m = packet.m
    if packet.grid.d == 1:
        ps = np.linspace(lo[0], hi[0], 65)[None]
    else:
        k = D2_BOUNDARY_SAMPLES // 4
        s = np.linspace(0.0, 1.0, k, endpoint=False)
        edges = [
            (lo[0] + s * (hi[0] - lo[0]), np.full(k, lo[1])),
            (np.full(k, hi[0]), lo[1] + s * (hi[1] - lo[1])),
            (hi[0] - s * (hi[0] - lo[0]), np.full(k, hi[1])),
            (np.full(k, lo[0]), hi[1] - s * (hi[1] - lo[1])),
        ]
        ps = np.stack([np.concatenate([e[0] for e in edges]), np.concatenate([e[1] for e in edges])])
    om = np.sqrt(np.sum(ps * ps, axis=0) + m * m)
    vs = ps / om
    return VelocitySupport(vs.min(axis=1), vs.max(axis=1), vs)


def check_prop_toto20_1(packet, h, t_list):
    """||exp(i t w) h(x/t) exp(-i t w) f - h(grad w(D)) f|| along t_list."""
    g = packet.grid
    target = specops.velocity_cutoff_array(h, packet.m, g) * packet.fourier_data
    om = specops.omega_array(g, packet.m, 1)
    vals = []
    for t in t_list:
        _guard(packet, t)
        gt = _g.ifft_array(g, packet.fourier_data * np.exp(-1j * t * om))
        cut = specops.sample_scaled(h, g, t) * gt
        back = _g.fft_array(g, cut) * np.exp(1j * t * om)
        vals.append(_g.momentum_norm(g, back - target))
    return DiagnosticSeries("prop_toto20_1", np.asarray(t_list, dtype=float), np.array(vals))


def check_prop_toto20_2(packet, chi1, chi2, t_list, floor=1e-14):
    """||chi1(x/t) exp(-i t w) chi2(grad w(D)) f|| along t_list, with the last-decade log-log slope."""
    gap = chi1.distance_to(chi2)
    if not gap > 0:
        raise PacketError(f"chi1 and chi2 supports overlap (gap {gap:.4g})")
    g = packet.grid
    filtered = specops.velocity_cutoff_array(chi2, packet.m, g) * packet.fourier_data
    om = specops.omega_array(g, packet.m, 1)
    vals = []
    for t in t_list:
        _guard(packet, t)
        gt = _g.ifft_array(g, filtered * np.exp(-1j * t * om))
        vals.append(l2_norm(ComplexField(g, specops.sample_scaled(chi1, g, t) * gt)))
    series = DiagnosticSeries("prop_toto20_2", np.asarray(t_list, dtype=float), np.array(vals))
    series.meta["support_gap"] = gap
    series.meta["fitted_slope"] = series.fitted_slope(floor=floor)
    return series


def product_state(f1, f2, symmetrize=True):
    """Two-particle amplitude f1 (x) f2, optionally symmetrized and renormalised."""
    a = np.asarray(f1.values)
    b = np.asarray(f2.values)
    d = f1.grid.d
    a_ = a.reshape(a.shape + (1,) * d)
    b_ = b.reshape((1,) * d + b.shape)
    vals = a_ * b_
    if symmetrize:
        vals = vals + b.reshape(b.shape + (1,) * d) * a.reshape((1,) * d + a.shape)
    out = _g.ComplexField2P(f1.grid, vals)
    nrm = l2_norm(out)
    if nrm == 0:
        raise PacketError("symmetrized product vanishes")
    return out.with_values(vals / nrm)
