"""Propagation-estimate diagnostics along two-particle trajectories.

Integrands are evaluated on stored snapshots; dt/t integrals are trapezoids in
log t (see DiagnosticSeries).  Heisenberg derivatives <u, DM u> are obtained by
differentiating the quadratic form along the free flow, never from an explicit
discrete commutator.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.integrate import simpson, trapezoid
from scipy.ndimage import map_coordinates

from . import grid as _g
from . import specops
from .regions import DEFAULT_DELTA, RegionSpec
from .series import DiagnosticSeries

SQRT2 = math.sqrt(2.0)


class ObservableError(ValueError):
    pass


class _Ops:
    """Raw-array operator kit for one grid and mass."""

    def __init__(self, grid, m):
        self.grid = grid
        self.m = m
        self.axes = grid.x_axes(2)
        self.vel = specops.grad_omega_arrays(grid, m, 2)
        self.omega = specops.omega_array(grid, m, 2)
        self.cell = grid.cell(2)

    def fft(self, a):
        return sfft.fftn(a, workers=_g.FFT_WORKERS)

    def ifft(self, a):
        return sfft.ifftn(a, workers=_g.FFT_WORKERS)

    def momentum(self, sym, a):
        return self.ifft(sym * self.fft(a))

    def free(self, a, s):
        if s == 0:
            return a
        return self.ifft(np.exp(-1j * s * self.omega) * self.fft(a))

    def coords(self, t):
        return [ax / t for ax in self.axes]

    def rel_velocity(self, j, a, t, a_hat=None):
        """(x_j/t - d_j omega~(D)) a."""
        a_hat = self.fft(a) if a_hat is None else a_hat
        return (self.axes[j] / t) * a - self.ifft(self.vel[j] * a_hat)

    def norm2(self, a):
        return float(np.sum(a.real ** 2 + a.imag ** 2) * self.cell)

    def inner(self, a, b):
        return complex(np.vdot(a, b) * self.cell)


_OPS_CACHE = {}


def _ops(grid, m):
    key = (grid, float(m))
    ops = _OPS_CACHE.get(key)
    if ops is None:
        if len(_OPS_CACHE) > 4:
            _OPS_CACHE.clear()
        ops = _OPS_CACHE[key] = _Ops(grid, m)
    return ops


def _scaled(fn, ops, t):
    y = np.stack(np.broadcast_arrays(*ops.coords(t)))
    return np.broadcast_to(fn(y), ops.grid.shape(2))


# --- observables ---------------------------------------------------------


@dataclass(frozen=True)
class PositionFactor:
    """G(x/t) for G acting on a (2d, ...) stack; ``clearance`` is the declared distance of supp G to the diagonal."""

    fn: object
    clearance: float = None
    label: str = "G(x/t)"

    def apply(self, ops, t, a, adjoint=False):
        s = _scaled(self.fn, ops, t)
        return (np.conj(s) if adjoint else s) * a


@dataclass(frozen=True)
class MomentumFactor:
    """g(p) given as a function of the 2d momentum components."""

    fn: object
    label: str = "g(p)"

    def apply(self, ops, t, a, adjoint=False):
        p = np.stack(np.broadcast_arrays(*ops.grid.p_axes(2)))
        s = self.fn(p)
        return ops.momentum(np.conj(s) if adjoint else s, a)


@dataclass(frozen=True)
class WeightFactor:
    fn: object
    label: str = "w(t)"

    def apply(self, ops, t, a, adjoint=False):
        w = self.fn(t)
        return (np.conj(w) if adjoint else w) * a


@dataclass(frozen=True)
class RelativeVelocityFactor:
    """Component j of x/t - grad omega~(D) (self-adjoint, unbounded on its own)."""

    j: int

    @property
    def label(self):
        return f"(x/t - grad w)_{self.j}"

    def apply(self, ops, t, a, adjoint=False):
        return ops.rel_velocity(self.j, a, t)


@dataclass(frozen=True)
class Term:
    """coef * (A_1 A_2 ... A_k), plus its adjoint when ``hc`` is set; factors act right to left."""

    coef: float
    factors: tuple
    hc: bool = False

    def apply(self, ops, t, a):
        out = a
        for f in reversed(self.factors):
            out = f.apply(ops, t, out)
        if self.hc:
            adj = a
            for f in self.factors:
                adj = f.apply(ops, t, adj, adjoint=True)
            out = out + adj
        return self.coef * out


@dataclass(frozen=True)
class PropagationObservable:
    """M(t) as a sum of terms built from position, momentum, weight and relative-velocity factors."""

    terms: tuple
    bounded: bool = True
    name: str = "M"
    min_scale: float = 0.0  # smallest feature size in y; sets when x/t is resolved by the lattice

    def position_factors(self):
        return [f for term in self.terms for f in term.factors if isinstance(f, PositionFactor)]

    def describe(self):
        parts = []
        for term in self.terms:
            body = " ".join(f.label for f in term.factors) or "1"
            parts.append(f"{term.coef:+g} [{body}{' + h.c.' if term.hc else ''}]")
        return " ".join(parts)

    def check_clearance(self):
        for f in self.position_factors():
            if f.clearance is None or not f.clearance > 0:
                raise ObservableError(
                    f"position factor {f.label} has no declared diagonal clearance; observables used with "
                    "sourced runs must vanish near the diagonal"
                )

    def apply(self, ops, t, a):
        out = np.zeros_like(a)
        for term in self.terms:
            out = out + term.apply(ops, t, a)
        return out

    def expectation(self, ops, t, a):
        return ops.inner(a, self.apply(ops, t, a)).real


def identity_observable():
    return PropagationObservable((Term(1.0, ()),), name="identity")


def momentum_observable(fn, label="g(p)"):
    return PropagationObservable((Term(1.0, (MomentumFactor(fn, label),)),), name="momentum multiplier")


def cutoff_observable(cut):
    """H(x/t) for a Cutoff2P (product or region form)."""
    return PropagationObservable((Term(1.0, (PositionFactor(cut, cut.margin, "H(x/t)"),)),), name="H_t")


class _GridFunction:
    """Fast bilinear lookup of a tabulated function of y in R^2, zero outside the table."""

    def __init__(self, axis, values):
        self.x0 = float(axis[0])
        self.h = float(axis[1] - axis[0])
        self.n = len(axis)
        self.values = values

    def __call__(self, y):
        idx = [(np.asarray(y[k]) - self.x0) / self.h for k in range(2)]
        idx = np.broadcast_arrays(*idx)
        return map_coordinates(self.values, idx, order=1, mode="constant", cval=0.0)


def graf_observable(gf, name="graf"):
    """M(t) = R(x/t) - 1/2 (grad R(x/t) . (x/t - grad w~) + h.c.) for a Graf function (d = 1)."""
    clearance = gf.params.eps_beta - SQRT2 * gf.params.eps_mol
    R = PositionFactor(_GridFunction(gf.axis, gf.R), clearance, "R(x/t)")
    terms = [Term(1.0, (R,))]
    for j in range(2):
        dR = PositionFactor(_GridFunction(gf.axis, gf.grad[j]), clearance, f"d{j}R(x/t)")
        terms.append(Term(-0.5, (dR, RelativeVelocityFactor(j)), hc=True))
    return PropagationObservable(tuple(terms), bounded=True, name=name, min_scale=gf.params.eps_mol)


def resolution_time(M, grid, features_per_cell=4.0):
    """Time after which the y = x/t lattice spacing dx/t is at most ``features_per_cell`` times M's smallest feature."""
    if not M.min_scale > 0:
        return 0.0
    return grid.dx / (features_per_cell * M.min_scale)


def relative_velocity_observable(K: RegionSpec, delta=DEFAULT_DELTA, d=1):
    """M(t) = (x/t - grad w~) G(x/t) (x/t - grad w~) with G the smoothed indicator of K."""
    G = PositionFactor(lambda y: K.smooth(y, delta), K.diagonal_clearance(), "1_K(x/t)")
    terms = tuple(Term(1.0, (RelativeVelocityFactor(j), G, RelativeVelocityFactor(j))) for j in range(2 * d))
    return PropagationObservable(terms, bounded=True, name="relative_velocity")


# --- integrand series ----------------------------------------------------


def _snapshots(traj):
    for t, f in traj.items():
        yield float(t), np.asarray(f.values)


def large_velocity_series(traj, r, r_prime, eps, delta=DEFAULT_DELTA):
    """||chi(x/t) F_t||^2 with chi the smoothed indicator of {r <= |y| <= r'} minus the tube |y1 - y2| < eps."""
    if not r > SQRT2:
        raise ValueError(f"large-velocity estimate needs r > sqrt(2), got r = {r}")
    if not r_prime > r:
        raise ValueError(f"need r' > r, got r = {r}, r' = {r_prime}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    region = RegionSpec.annulus(r, r_prime, diag_gap=eps, d=traj.grid.d)
    ops = _ops(traj.grid, traj.m)
    times, vals = [], []
    for t, u in _snapshots(traj):
        chi = _scaled(lambda y: region.smooth(y, delta), ops, t)
        times.append(t)
        vals.append(ops.norm2(chi * u))
    return DiagnosticSeries("large_velocity", np.array(times), np.array(vals),
                            {"r": r, "r_prime": r_prime, "eps": eps, "delta": delta})


def phase_space_terms(ops, t, u, chi):
    """Symmetrised integrand sum_j ||(chi B_j + B_j chi) u / 2||^2 and the ordering discrepancy sum_j ||[chi, B_j] u||^2."""
    u_hat = ops.fft(u)
    cu = chi * u
    cu_hat = ops.fft(cu)
    total, disc = 0.0, 0.0
    for j in range(2 * ops.grid.d):
        a = chi * ops.rel_velocity(j, u, t, u_hat)
        b = ops.rel_velocity(j, cu, t, cu_hat)
        total += ops.norm2(0.5 * (a + b))
        disc += ops.norm2(a - b)
    return total, disc


def phase_space_series(traj, K: RegionSpec, delta=DEFAULT_DELTA):
    """||1_K(x/t)(x/t - grad w~) F_t||^2 with symmetric ordering; the ordering discrepancy is kept in meta."""
    if not K.diagonal_clearance() > 0:
        raise ValueError("K touches the diagonal")
    ops = _ops(traj.grid, traj.m)
    times, vals, discs = [], [], []
    for t, u in _snapshots(traj):
        chi = _scaled(lambda y: K.smooth(y, delta), ops, t)
        v, dsc = phase_space_terms(ops, t, u, chi)
        times.append(t)
        vals.append(v)
        discs.append(math.sqrt(dsc))
    discs = np.array(discs)
    times = np.array(times)
    disc_series = DiagnosticSeries("ordering_discrepancy", times, discs)
    return DiagnosticSeries("phase_space", times, np.array(vals),
                            {"K": K.as_dict(), "delta": delta, "ordering_discrepancy": discs.tolist(),
                             "discrepancy_slope": disc_series.fitted_slope(floor=1e-300)})


def free_phase_space_series(u0, K, m, times, delta=DEFAULT_DELTA):
    """Phase-space integrand along exp(-i t w~) u0 (u0 taken at t = 0)."""
    ops = _ops(u0.grid, m)
    u0_hat = ops.fft(np.asarray(u0.values))
    vals = []
    for t in times:
        u = ops.ifft(np.exp(-1j * t * ops.omega) * u0_hat)
        chi = _scaled(lambda y: K.smooth(y, delta), ops, t)
        vals.append(phase_space_terms(ops, t, u, chi)[0])
    return DiagnosticSeries("free_phase_space", np.asarray(times, dtype=float), np.array(vals))


def free_phase_space_bound(u0, K, m, T=400.0, n_times=64, delta=DEFAULT_DELTA):
    times = np.geomspace(1.0, T, n_times)
    s = free_phase_space_series(u0, K, m, times, delta)
    norm2 = _g.l2_norm(u0) ** 2
    integral = s.total
    return {"integral": integral, "norm2": norm2, "C_measured": integral / norm2 if norm2 > 0 else 0.0,
            "T": T, "n_times": n_times, "tail_fraction": s.tail_fraction()}


def random_band_limited(grid, m_packets, rng, p_band=1.0, p_width=0.3, x_spread=10.0):
    """Random superposition of compact-Fourier-support product packets (band |p| <= p_band + p_width)."""
    from .kgwave import make_packet, product_state

    total = None
    for _ in range(m_packets):
        pc = rng.uniform(-p_band, p_band, size=2)
        x0 = rng.uniform(-x_spread, x_spread, size=2)
        f1 = make_packet(grid, 1.0, pc[0], p_width, x0=x0[0], sharpness=4).initial
        f2 = make_packet(grid, 1.0, pc[1], p_width, x0=x0[1], sharpness=4).initial
        amp = complex(rng.normal(), rng.normal())
        term = product_state(f1, f2, symmetrize=False).values * amp
        total = term if total is None else total + term
    return _g.ComplexField2P(grid, total)


def phase_space_constant_ensemble(grid, m, K, n_draws=20, seed=0, T=400.0, n_times=48, **kw):
    rng = np.random.default_rng(seed)
    consts = []
    for _ in range(n_draws):
        u0 = random_band_limited(grid, 3, rng, **kw)
        consts.append(free_phase_space_bound(u0, K, m, T, n_times)["C_measured"])
    consts = np.array(consts)
    return {"C_values": consts.tolist(), "C_max": float(consts.max()), "C_min": float(consts.min()),
            "max_over_min": float(consts.max() / consts.min()) if consts.min() > 0 else float("inf")}


# --- Heisenberg derivatives and monitors ---------------------------------


def _source(traj, t, u):
    if traj.source.variant == "none":
        return None
    return np.asarray(traj.source_at(t))


def _require_clearance(M, traj):
    if traj.source.variant != "none":
        M.check_clearance()


def heisenberg_increment(M, traj, t, dt):
    """Centred difference (Q(t+dt) - Q(t))/dt of Q = <u, M u> along the trajectory; O(dt^2) at t + dt/2."""
    ops = _ops(traj.grid, traj.m)
    try:
        a = traj.at(t).values
        b = traj.at(t + dt).values
    except KeyError as exc:
        raise KeyError(f"heisenberg_increment needs snapshots at t={t} and t+dt={t + dt}") from exc
    return (M.expectation(ops, t + dt, b) - M.expectation(ops, t, a)) / dt


def free_flow_derivative(M, ops, t, u, h=None):
    """<u, DM(t) u> = d/ds <e^{-isH} u, M(t+s) e^{-isH} u> at s = 0 (fourth-order centred difference)."""
    h = 1e-2 * t if h is None else h
    h = min(h, 0.25 * t)
    u_hat = ops.fft(u)
    q = {}
    for k in (-2, -1, 1, 2):
        s = k * h
        us = ops.ifft(np.exp(-1j * s * ops.omega) * u_hat)
        q[k] = M.expectation(ops, t + s, us)
    return (-q[2] + 8 * q[1] - 8 * q[-1] + q[-2]) / (12 * h)


def _quadratic_forms(M, traj, ops, t_start=0.0):
    times, Q, DM, S = [], [], [], []
    for t, u in _snapshots(traj):
        if t < t_start:
            continue
        times.append(t)
        Q.append(M.expectation(ops, t, u))
        DM.append(free_flow_derivative(M, ops, t, u))
        r = _source(traj, t, u)
        S.append(0.0 if r is None else 2.0 * ops.inner(M.apply(ops, t, u), r).real)
    return np.array(times), np.array(Q), np.array(DM), np.array(S)


def monitor_A1(M, traj, B_target, C_list=(), t_start=None):
    """Bookkeeping identity Q(T) - Q(t1) = int (<DM> + 2 Re <M u, r>) dt and the implied bound on int ||B u||^2.

    ``B_target`` and each element of ``C_list`` map (ops, t, u) to ||B(t) u||^2.
    The integration starts at the first snapshot after ``t_start`` (default: the
    time from which the lattice resolves M's features in y = x/t).
    """
    if not M.bounded:
        raise ObservableError(f"observable {M.name} is not declared bounded")
    _require_clearance(M, traj)
    ops = _ops(traj.grid, traj.m)
    if t_start is None:
        t_start = resolution_time(M, traj.grid)
    times, Q, DM, S = _quadratic_forms(M, traj, ops, t_start)
    integrand = DM + S
    simp = float(simpson(integrand, x=times))
    trap = float(trapezoid(integrand, x=times))
    lhs = float(Q[-1] - Q[0])
    scale = max(np.max(np.abs(Q)), 1e-300)
    err_est = max(abs(simp - trap), 1e-12 * scale)
    closure = abs(lhs - simp)

    snaps = [(t, u) for t, u in _snapshots(traj) if t >= t_start]
    B2 = np.array([B_target(ops, t, u) for t, u in snaps])
    C2 = np.zeros_like(B2)
    for C in C_list:
        C2 += np.array([C(ops, t, u) for t, u in snaps])
    # residual envelope kappa / t^2 covering DM - (|Bu|^2 - sum |Cu|^2) < 0
    deficit = np.maximum(0.0, (B2 - C2) - DM)
    kappa = float(np.max(deficit * times ** 2))
    int_B = float(trapezoid(B2, x=times))
    int_C = float(trapezoid(C2, x=times))
    int_S = float(trapezoid(S, x=times))
    int_env = kappa * (1.0 / times[0] - 1.0 / times[-1])
    bound = lhs + int_C - int_S + int_env
    return {
        "observable": M.describe(),
        "t_start": float(times[0]),
        "t_end": float(times[-1]),
        "boundary_difference": lhs,
        "integral_simpson": simp,
        "integral_trapezoid": trap,
        "quadrature_error_estimate": err_est,
        "closure_error": closure,
        "closure_ratio": closure / err_est,
        "closes": bool(closure <= 10.0 * err_est),
        "integral_B": int_B,
        "integral_C": int_C,
        "source_integral": int_S,
        "kappa": kappa,
        "bound": bound,
        "bound_over_integral": bound / int_B if int_B > 0 else float("inf"),
        "bound_holds": bool(int_B <= bound * (1 + 1e-9) + 1e-300),
        "series": {"t": times.tolist(), "Q": Q.tolist(), "DM": DM.tolist(), "source": S.tolist(),
                   "B2": B2.tolist(), "C2": C2.tolist()},
    }


def source_term_tail(report):
    """Last-decade share of int |2 Re <M u, r>| dt from a monitor_A1 report."""
    s = report["series"]
    t = np.array(s["t"])
    v = np.abs(np.array(s["source"]))
    run = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))])
    if run[-1] <= 0:
        return 0.0
    before = np.interp(t[-1] / 10.0, t, run)
    return float((run[-1] - before) / run[-1])


def monitor_A3(M, traj, tol=1e-3):
    _require_clearance(M, traj)
    ops = _ops(traj.grid, traj.m)
    times, Q = [], []
    for t, u in _snapshots(traj):
        times.append(t)
        Q.append(M.expectation(ops, t, u))
    times, Q = np.array(times), np.array(Q)
    late = times >= times[-1] / 2
    tail = float(np.max(Q[late]) - np.min(Q[late]))
    return {"limit_estimate": float(Q[-1]), "cauchy_tail": tail, "converged": bool(tail < tol),
            "tolerance": tol, "norm2": ops.norm2(np.asarray(traj.final.values)),
            "series": {"t": times.tolist(), "Q": Q.tolist()}}


def dyadic_checkpoints(times, t0):
    """Snapshot times t0 2^k <= T plus the final time."""
    times = np.asarray(times)
    out = []
    k = 0
    while t0 * 2 ** k <= times[-1] * (1 + 1e-12):
        tk = t0 * 2 ** k
        j = int(np.argmin(np.abs(times - tk)))
        if abs(times[j] - tk) <= 1e-9 * tk:
            out.append(float(times[j]))
        k += 1
    if not out or out[-1] != float(times[-1]):
        out.append(float(times[-1]))
    return out


def monitor_A2(M, traj):
    """G(t) = e^{i t w~} M(t) u(t) at dyadic checkpoints; tail_k = sup over pairs at or after checkpoint k."""
    _require_clearance(M, traj)
    ops = _ops(traj.grid, traj.m)
    ts = dyadic_checkpoints(traj.times, traj.times[0])
    vecs = []
    for t in ts:
        u = np.asarray(traj.at(t).values)
        vecs.append(ops.ifft(np.exp(1j * t * ops.omega) * ops.fft(M.apply(ops, t, u))))
    n = len(vecs)
    diff = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            diff[i, j] = diff[j, i] = math.sqrt(ops.norm2(vecs[i] - vecs[j]))
    tails = [float(np.max(diff[k:, k:])) for k in range(n)]
    return {"vector_limit": _g.ComplexField2P(traj.grid, vecs[-1]), "checkpoints": ts, "cauchy_tail": tails}
