"""Intermediate limit F+ = lim e^{i t w~(D)} H_t F_t, its source-free Fourier oracle, and Cook-method wave operators."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from . import grid as _g
from . import specops
from .detectors import CutoffError, ProductCutoff, RegionCutoff
from .dynamics import cook_vector
from .propest import _ops, dyadic_checkpoints


class NonConvergenceError(RuntimeError):
    pass


@dataclass
class LimitResult:
    final: _g.ComplexField2P
    checkpoints: list
    cauchy_tail: list  # ||G(t_k) - G(t_{k-1})|| for k >= 1
    relative_tail: list
    converged: bool
    tol: float
    oracle_residual: float = None
    norms: list = field(default_factory=list)

    @property
    def tail_monotone(self):
        """Cauchy tail nonincreasing up to 10% fluctuation."""
        tails = self.cauchy_tail
        return all(b <= 1.1 * a for a, b in zip(tails, tails[1:]))

    def as_dict(self):
        return {"checkpoints": self.checkpoints, "cauchy_tail": self.cauchy_tail,
                "relative_tail": self.relative_tail, "converged": self.converged, "tol": self.tol,
                "oracle_residual": self.oracle_residual, "norms": self.norms,
                "tail_monotone": self.tail_monotone}


@dataclass
class WaveOperatorResult:
    mapped: _g.ComplexField2P
    tail_windows: list  # (t_lo, t_hi, int ||V u|| dt)
    isometry_defect: float
    tail: float
    converged: bool
    direct_discrepancy: float
    norm_in: float
    norm_out: float

    @property
    def tail_norms(self):
        return [w[2] for w in self.tail_windows]

    def as_dict(self):
        return {"tail_windows": self.tail_windows, "isometry_defect": self.isometry_defect, "tail": self.tail,
                "converged": self.converged, "direct_discrepancy": self.direct_discrepancy,
                "norm_in": self.norm_in, "norm_out": self.norm_out}


def _check_cut(H):
    if isinstance(H, ProductCutoff):
        return
    if isinstance(H, RegionCutoff) and H.margin > 0:
        return
    raise CutoffError("intermediate limit needs a product cutoff or a region cutoff with diagonal clearance")


def interaction_picture(ops, t, values):
    """e^{i t w~(D)} applied to a raw two-particle array."""
    return ops.ifft(np.exp(1j * t * ops.omega) * ops.fft(values))


def limit_vector(traj, H, t):
    ops = _ops(traj.grid, traj.m)
    u = np.asarray(traj.at(t).values)
    return interaction_picture(ops, t, H.samples(traj.grid, t) * u)


def intermediate_limit(traj, H, tol=1e-2, oracle=None):
    """G(t_k) = e^{i t_k w~} H(x/t_k) u(t_k) at dyadic checkpoints t0 2^k (and T); see LimitResult."""
    _check_cut(H)
    if not traj.valid:
        raise NonConvergenceError("trajectory is flagged invalid (wraparound guard)")
    ops = _ops(traj.grid, traj.m)
    ts = dyadic_checkpoints(traj.times, traj.times[0])
    prev = None
    tails, rel, norms = [], [], []
    for t in ts:
        G = limit_vector(traj, H, t)
        n = math.sqrt(ops.norm2(G))
        norms.append(n)
        if prev is not None:
            dn = math.sqrt(ops.norm2(G - prev))
            tails.append(dn)
            rel.append(dn / n if n > 0 else 0.0)
        prev = G
    final = _g.ComplexField2P(traj.grid, prev)
    if norms[-1] == 0:
        converged = True
    else:
        converged = bool(tails and tails[-1] < tol * norms[-1])
    res = LimitResult(final, ts, tails, rel, converged, tol, norms=norms)
    if oracle is not None:
        on = _g.l2_norm(oracle)
        diff = _g.l2_norm(final - oracle)
        res.oracle_residual = diff / on if on > 0 else diff
    return res


def fourier_oracle_sourcefree(u0, h1, h2, m):
    """h1(grad w(D1)) h2(grad w(D2)) u0 by momentum multiplication."""
    mult = specops.velocity_cutoff_array((h1, h2), m, u0.grid, 2)
    return _g.fourier_inverse(u0.grid, mult * _g.fourier_forward(u0), 2)


def free_data(traj):
    """u0 with u(t) = e^{-i t w~} u0 for a source-free trajectory."""
    ops = _ops(traj.grid, traj.m)
    t0 = float(traj.times[0])
    return _g.ComplexField2P(traj.grid, interaction_picture(ops, t0, np.asarray(traj.initial.values)))


def oracle_for(traj, H):
    if not isinstance(H, ProductCutoff):
        raise CutoffError("the Fourier oracle is defined for product cutoffs")
    return fourier_oracle_sourcefree(free_data(traj), H.h1, H.h2, traj.m)


def _window_integral(t, v, lo, hi):
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if np.count_nonzero(sel) < 2:
        return 0.0
    return float(trapezoid(v[sel], x=t[sel]))


def cook_wave_adjoint(traj, V=None, T=None, tail_tol=1e-2):
    """Cook-integral estimate of W+* Psi, Psi = u(t0): e^{i t0 w~} u(t0) + int e^{i t w~}(-i V u) dt.

    The tail is int_{T/2}^{T} ||V u|| dt (the continuation beyond T is not simulated).
    """
    if traj.source.variant not in ("none", "pair_potential"):
        raise ValueError("cook_wave_adjoint needs a pair-potential (or source-free) run")
    ops = _ops(traj.grid, traj.m)
    T = float(traj.times[-1]) if T is None else float(T)
    if abs(T - traj.times[-1]) > 1e-9 * T:
        raise ValueError(f"cook_wave_adjoint evaluates at the run end T={traj.times[-1]}")
    if traj.source.variant == "none":
        mapped = free_data(traj)
    else:
        mapped = cook_vector(traj)
    logs = traj.step_arrays()
    t, v = logs["t"], logs["v_norm"]
    windows = []
    k = 0
    while traj.times[0] * 2 ** (k + 1) <= T * (1 + 1e-12):
        hi = traj.times[0] * 2 ** (k + 1)
        windows.append((hi / 2, hi, _window_integral(t, v, hi / 2, hi)))
        k += 1
    tail = _window_integral(t, v, T / 2, T)
    windows.append((T / 2, T, tail))
    norm_in = _g.l2_norm(traj.initial)
    norm_out = _g.l2_norm(mapped)
    direct = interaction_picture(ops, T, np.asarray(traj.final.values))
    disc = math.sqrt(ops.norm2(direct - mapped.values)) / norm_in if norm_in > 0 else 0.0
    defect = abs(norm_out - norm_in) / norm_in if norm_in > 0 else 0.0
    return WaveOperatorResult(mapped, windows, defect, tail, bool(tail < tail_tol), disc, norm_in, norm_out)


def completeness_report(traj, H, V=None, cook=None, limit_tol=1e-2, tail_tol=1e-2):
    """Residual ||F+ - h1(grad w) h2(grad w) W+* Psi|| / ||Psi||."""
    if not isinstance(H, ProductCutoff):
        raise CutoffError("completeness_report needs a product cutoff")
    lim = intermediate_limit(traj, H, tol=limit_tol)
    cook = cook_wave_adjoint(traj, tail_tol=tail_tol) if cook is None else cook
    restricted = fourier_oracle_sourcefree(cook.mapped, H.h1, H.h2, traj.m)
    norm_in = cook.norm_in
    residual = _g.l2_norm(lim.final - restricted) / norm_in if norm_in > 0 else 0.0
    report = {
        "residual": residual,
        "limit": lim.as_dict(),
        "cook": cook.as_dict(),
        "limit_converged": lim.converged,
        "cook_converged": cook.converged,
        "converged": bool(lim.converged and cook.converged),
        "norm_F_plus": _g.l2_norm(lim.final),
        "norm_restricted": _g.l2_norm(restricted),
    }
    pot = traj.source.potential if traj.source.variant == "pair_potential" else None
    coupling = getattr(pot, "coupling", None)
    if coupling is not None and coupling < 0:
        report["caveat"] = "attractive potential: possible bound-state deficit, no pass/fail"
    return report
