"""Smooth compactly supported profiles shared by packets, cutoffs and the Graf construction.

The base bump is ``b(s) = exp(1 - 1/(1 - s^2))`` on ``|s| < 1`` (zero elsewhere),
normalised so that ``b(0) = 1``.  The smooth step rises from 0 at ``s = 0`` to
1 at ``s = 1`` and is the normalised running integral of the bump rescaled to
``(0, 1)``.
"""

import numpy as np

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def bump(s, sharpness=1.0):
    """``exp(a (1 - 1/(1 - s^2)))`` with ``a = sharpness``; larger ``a`` trades core width for faster spatial tails."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(sharpness * (1.0 - 1.0 / (1.0 - si * si)))
    return out


def sharp_bump(sharpness):
    if not sharpness > 0:
        raise ValueError(f"sharpness must be positive, got {sharpness}")
    return lambda s: bump(s, sharpness)


def bump_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    q = 1.0 - si * si
    out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * si / (q * q))
    return out


def _unit_bump(tau):
    # bump rescaled to the unit interval (0, 1)
    return bump(2.0 * tau - 1.0)


def _unit_bump_prime(tau):
    return 2.0 * bump_prime(2.0 * tau - 1.0)


def _integrate_unit_bump(s):
    """Gauss-Legendre integral of the unit bump over [0, s] for s in [0, 1]."""
    s = np.asarray(s, dtype=float)
    nodes = 0.5 * (_GL_NODES + 1.0)
    w = 0.5 * _GL_WEIGHTS
    tau = s[..., None] * nodes
    return s * np.sum(w * _unit_bump(tau), axis=-1)


_UNIT_BUMP_MASS = float(_integrate_unit_bump(np.array(1.0)))


def smoothstep(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    out = np.where(s >= 1.0, 1.0, 0.0)
    mid = (s > 0.0) & (s < 1.0)
    if np.any(mid):
        out = out.astype(float)
        out[mid] = _integrate_unit_bump(s[mid]) / _UNIT_BUMP_MASS
    return out


def smoothstep_prime(s):
    return _unit_bump(np.clip(np.asarray(s, dtype=float), 0.0, 1.0)) / _UNIT_BUMP_MASS


def smoothstep_second(s):
    return _unit_bump_prime(np.clip(np.asarray(s, dtype=float), 0.0, 1.0)) / _UNIT_BUMP_MASS


def plateau(r, inner, outer):
    """Radial plateau: 1 for r <= inner, 0 for r >= outer, smooth in between."""
    if outer <= inner:
        raise ValueError(f"outer radius {outer} must exceed inner radius {inner}")
    return 1.0 - smoothstep((np.asarray(r, dtype=float) - inner) / (outer - inner))
