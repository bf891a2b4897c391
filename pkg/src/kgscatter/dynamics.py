"""Time evolution of two-particle amplitudes for du/dt = -i H u + r(t), H = omega~(D).

Three source models are supported: none (exact spectral propagation), a pair
potential V(x1 - x2) (Strang splitting) and an externally supplied source
r(t) (midpoint Duhamel).  Runs start at t0 > 0 and record full snapshots on a
schedule plus per-step scalars (norm, boundary mass, ||V u||).
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import grid as _g
from . import specops
from .grid import ComplexField2P

BOUNDARY_BAND = 0.05


class GuardError(RuntimeError):
    """Raised when a run violates the wraparound guard; carries the partial trajectory."""

    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


class ConfigError(ValueError):
    pass


# --- sources -------------------------------------------------------------


@dataclass(frozen=True)
class GaussianPotential:
    """V(x) = coupling * exp(-x^2 / (2 width^2)) as a function of the separation x = x1 - x2."""

    coupling: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigError(f"potential width must be positive, got {self.width}")

    def __call__(self, x):
        return self.coupling * np.exp(-(x * x) / (2.0 * self.width ** 2))

    def as_dict(self):
        return {"kind": "gaussian", "coupling": self.coupling, "width": self.width}


@dataclass(frozen=True, eq=False)
class SampledPotential:
    """Potential given by samples on the separation lattice (periodic difference x1 - x2)."""

    separations: np.ndarray
    values: np.ndarray

    def __call__(self, x):
        return np.interp(x, self.separations, self.values, left=0.0, right=0.0)

    def as_dict(self):
        return {"kind": "sampled", "separations": list(map(float, self.separations)),
                "values": list(map(float, self.values))}


@dataclass(frozen=True)
class SourceModel:
    """variant: ``none`` | ``pair_potential`` | ``tabulated``.

    ``sampler(t, grid)`` returns r(t) as a two-particle position array for the
    tabulated variant.
    """

    variant: str = "none"
    potential: object = None
    sampler: object = None

    def __post_init__(self):
        if self.variant not in ("none", "pair_potential", "tabulated"):
            raise ConfigError(f"unknown source variant {self.variant!r}")
        if self.variant == "pair_potential" and self.potential is None:
            raise ConfigError("pair_potential source needs a potential")
        if self.variant == "tabulated" and self.sampler is None:
            raise ConfigError("tabulated source needs a sampler")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def pair(cls, potential):
        return cls("pair_potential", potential=potential)

    @classmethod
    def tabulated(cls, sampler):
        return cls("tabulated", sampler=sampler)


@dataclass(frozen=True, eq=False)
class TabulatedSource:
    """r(t) from stored samples, linearly interpolated in t."""

    times: np.ndarray
    values: np.ndarray  # shape (len(times), *grid shape)

    def __call__(self, t, grid):
        ts = self.times
        if t <= ts[0]:
            return self.values[0]
        if t >= ts[-1]:
            return self.values[-1]
        k = int(np.searchsorted(ts, t)) - 1
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1 - w) * self.values[k] + w * self.values[k + 1]


def separation(grid):
    """Periodic separation x1 - x2 (d = 1) or its norm (d = 2) on the two-particle grid."""
    axes = grid.x_axes(2)
    d = grid.d
    two_L = 2.0 * grid.L
    comps = [((axes[j] - axes[d + j]) + grid.L) % two_L - grid.L for j in range(d)]
    if d == 1:
        return comps[0]
    return np.sqrt(sum(c * c for c in comps))


def potential_array(grid, potential):
    sep = separation(grid)
    vals = potential(sep)
    peak = np.max(np.abs(vals))
    if peak > 0:
        edge = abs(float(potential(np.array(grid.L))))
        if edge > 1e-14 * peak:
            raise ConfigError(
                f"potential has not decayed by half-box separation L = {grid.L}: |V(L)|/peak = {edge / peak:.3g}"
            )
    return np.broadcast_to(vals, grid.shape(2))


# --- configuration and trajectory ----------------------------------------


@dataclass
class EvolutionConfig:
    T: float
    dt: float = 0.25
    t0: float = 1.0
    scheme: str = "strang"
    n_log: int = 96
    linear_step: float = 0.0
    extra_times: tuple = ()
    wraparound_tol: float = 1e-6
    record_cook: bool = False

    def __post_init__(self):
        if not self.t0 > 0:
            raise ConfigError(f"t0 must be positive, got {self.t0}")
        if not self.T > self.t0:
            raise ConfigError(f"T must exceed t0, got T={self.T}, t0={self.t0}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.scheme not in ("strang", "duhamel_midpoint"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        for t in self.extra_times:
            if not self.t0 <= t <= self.T:
                raise ConfigError(f"snapshot time {t} outside [{self.t0}, {self.T}]")

    def schedule(self):
        ts = {float(self.t0), float(self.T)}
        if self.n_log > 1:
            ts.update(np.geomspace(self.t0, self.T, self.n_log).tolist())
        k = 0
        while self.t0 * 2 ** k <= self.T:
            ts.add(float(self.t0 * 2 ** k))
            k += 1
        if self.linear_step > 0:
            ts.update(np.arange(self.t0, self.T, self.linear_step).tolist())
        ts.update(float(t) for t in self.extra_times)
        out = np.array(sorted(ts))
        # merge near-duplicates produced by floating-point geomspace endpoints
        keep = np.concatenate([[True], np.diff(out) > 1e-9 * out[1:]])
        return out[keep]

    def as_dict(self):
        return {"t0": self.t0, "T": self.T, "dt": self.dt, "scheme": self.scheme, "n_log": self.n_log,
                "linear_step": self.linear_step, "extra_times": list(self.extra_times),
                "wraparound_tol": self.wraparound_tol, "record_cook": self.record_cook}


@dataclass
class Trajectory:
    grid: _g.GridSpec
    m: float
    config: EvolutionConfig
    source: SourceModel
    snapshots: dict = field(default_factory=dict)
    step_log: dict = field(default_factory=lambda: {"t": [], "norm": [], "boundary_mass": [], "v_norm": []})
    valid: bool = True
    cook: object = None  # accumulated Cook integral, momentum space (raw FFT scaling)

    @property
    def times(self):
        return np.array(sorted(self.snapshots))

    def items(self):
        for t in self.times:
            yield t, self.snapshots[t]

    def at(self, t):
        if t in self.snapshots:
            return self.snapshots[t]
        ts = self.times
        k = int(np.argmin(np.abs(ts - t)))
        if abs(ts[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t = {t} (nearest {ts[k]})")
        return self.snapshots[ts[k]]

    @property
    def initial(self):
        return self.snapshots[self.times[0]]

    @property
    def final(self):
        return self.snapshots[self.times[-1]]

    def source_at(self, t):
        """r(t) for the stored snapshot at t, as a raw position array."""
        u = self.at(t)
        if self.source.variant == "none":
            return np.zeros_like(u.values)
        if self.source.variant == "pair_potential":
            return -1j * potential_array(self.grid, self.source.potential) * u.values
        return np.asarray(self.source.sampler(t, self.grid), dtype=complex)

    def step_arrays(self):
        return {k: np.asarray(v) for k, v in self.step_log.items()}


# --- steppers ------------------------------------------------------------


class _Kernel:
    """Precomputed spectral data for one grid/mass."""

    def __init__(self, grid, m):
        self.grid = grid
        self.m = m
        self.omega = np.ascontiguousarray(specops.omega_array(grid, m, 2))
        self.cell = grid.cell(2)
        x = np.abs(grid.x)
        edge = x >= (1.0 - BOUNDARY_BAND) * grid.L
        d2 = 2 * grid.d
        masks = [edge.reshape((-1,) + (1,) * (d2 - 1 - k)) for k in range(d2)]
        band = masks[0]
        for mk in masks[1:]:
            band = band | mk
        self.band = np.broadcast_to(band, grid.shape(2))
        self._phase_cache = {}

    def phase(self, dt):
        key = float(dt)
        ph = self._phase_cache.get(key)
        if ph is None:
            ph = np.exp(-1j * dt * self.omega)
            if len(self._phase_cache) > 8:
                self._phase_cache.clear()
            self._phase_cache[key] = ph
        return ph

    def fft(self, a):
        return sfft.fftn(a, workers=_g.FFT_WORKERS)

    def ifft(self, a):
        return sfft.ifftn(a, workers=_g.FFT_WORKERS)

    def free(self, u, dt):
        if dt == 0:
            return u.copy()
        return self.ifft(self.fft(u) * self.phase(dt))

    def mass(self, u):
        return float(np.sum(u.real ** 2 + u.imag ** 2) * self.cell)

    def boundary_mass(self, u):
        a = np.abs(u[self.band]) ** 2
        return float(np.sum(a) * self.cell)


def _kernel(grid, m):
    return _Kernel(grid, m)


def step_free(field, dt, m):
    k = _kernel(field.grid, m)
    return field.with_values(k.free(field.values, dt))


def step_strang(field, dt, V, m):
    """exp(-i dt/2 V) exp(-i dt w~(D)) exp(-i dt/2 V); V is a potential callable or sampled array."""
    k = _kernel(field.grid, m)
    varr = V if isinstance(V, np.ndarray) else potential_array(field.grid, V)
    half = np.exp(-0.5j * dt * varr)
    return field.with_values(half * k.free(half * field.values, dt))


def step_duhamel(field, t, dt, source, m):
    """u(t+dt) = exp(-i dt H) u(t) + dt exp(-i dt/2 H) r(t + dt/2)."""
    k = _kernel(field.grid, m)
    sampler = source.sampler if isinstance(source, SourceModel) else source
    r_mid = np.asarray(sampler(t + 0.5 * dt, field.grid), dtype=complex)
    return field.with_values(k.free(field.values, dt) + dt * k.free(r_mid, 0.5 * dt))


def run(initial, source, config, m, progress=None):
    """Advance ``initial`` (the amplitude at config.t0) to config.T; see module docstring."""
    if not isinstance(initial, ComplexField2P):
        raise ConfigError("initial data must be a two-particle field")
    grid = initial.grid
    kern = _Kernel(grid, m)
    traj = Trajectory(grid, m, config, source)
    sched = config.schedule()
    u = np.array(initial.values, dtype=complex)
    varr = None
    if source.variant == "pair_potential":
        varr = np.ascontiguousarray(potential_array(grid, source.potential))
    elif source.variant == "tabulated" and config.scheme != "duhamel_midpoint":
        raise ConfigError("tabulated sources need scheme 'duhamel_midpoint'")
    if source.variant == "pair_potential" and config.scheme != "strang":
        raise ConfigError("pair potentials are integrated with scheme 'strang'")

    cook = None
    cook_phase = None
    if config.record_cook:
        # e^{i t w~} u(t), accumulated in momentum space
        cook_phase = np.exp(1j * config.t0 * kern.omega)
        cook = kern.fft(u) * cook_phase

    log = traj.step_log

    def record_step(t, u, vu_norm):
        log["t"].append(float(t))
        log["norm"].append(math.sqrt(kern.mass(u)))
        bm = kern.boundary_mass(u)
        log["boundary_mass"].append(bm)
        log["v_norm"].append(vu_norm)
        if bm > config.wraparound_tol:
            traj.valid = False
            raise GuardError(
                f"boundary mass {bm:.3g} exceeds wraparound tolerance {config.wraparound_tol:.3g} at t = {t:.6g}; "
                f"enlarge the box beyond L = {grid.L:g} or shorten T",
                traj,
            )

    def v_norm(u):
        if varr is None:
            return 0.0
        return math.sqrt(kern.mass(varr * u))

    t = float(sched[0])
    record_step(t, u, v_norm(u))
    traj.snapshots[t] = ComplexField2P(grid, u.copy())
    for t_next in sched[1:]:
        gap = float(t_next) - t
        if source.variant == "none":
            u = kern.free(u, gap)
            record_step(t_next, u, 0.0)
            if cook is not None:
                cook_phase = np.exp(1j * t_next * kern.omega)
        else:
            nsub = max(1, int(math.ceil(gap / config.dt - 1e-9)))
            h = gap / nsub
            if source.variant == "pair_potential":
                half = np.exp(-0.5j * h * varr)
                full = half * half
                if cook is None:
                    # fused half-steps between consecutive kinetic steps
                    u = half * u
                    for j in range(nsub):
                        u = kern.free(u, h)
                        tj = t + (j + 1) * h
                        if j < nsub - 1:
                            u = full * u
                            record_step(tj, half.conj() * u, 0.0)
                        else:
                            u = half * u
                    record_step(t_next, u, v_norm(u))
                else:
                    step_phase = np.exp(1j * h * kern.omega)
                    vu_hat = kern.fft(varr * u) * cook_phase
                    for j in range(nsub):
                        u = half * kern.free(half * u, h)
                        cook_phase = cook_phase * step_phase
                        new_vu_hat = kern.fft(varr * u) * cook_phase
                        cook = cook - 0.5j * h * (vu_hat + new_vu_hat)
                        vu_hat = new_vu_hat
                        tj = t + (j + 1) * h
                        record_step(tj, u, v_norm(u))
            else:
                for j in range(nsub):
                    tj = t + j * h
                    r_mid = np.asarray(source.sampler(tj + 0.5 * h, grid), dtype=complex)
                    u = kern.free(u, h) + h * kern.free(r_mid, 0.5 * h)
                    record_step(tj + h, u, 0.0)
        t = float(t_next)
        traj.snapshots[t] = ComplexField2P(grid, u.copy())
        if progress is not None:
            progress(t)
    if cook is not None:
        traj.cook = cook
    return traj


def source_offdiag_norm(traj, cut, t):
    """||H~(x/t) r(t)|| for a cutoff with declared diagonal clearance."""
    if not cut.margin > 0:
        raise ConfigError("source cutoff support touches the diagonal")
    r = traj.source_at(t)
    s = cut.samples(traj.grid, t)
    return float(np.sqrt(np.sum(np.abs(s * r) ** 2) * traj.grid.cell(2)))


def cook_vector(traj):
    """Cook-integral estimate of exp(i T w~) u(T) as a position-space field (requires record_cook)."""
    if traj.cook is None:
        raise ConfigError("trajectory was run without record_cook")
    kern = _Kernel(traj.grid, traj.m)
    return ComplexField2P(traj.grid, kern.ifft(traj.cook))
