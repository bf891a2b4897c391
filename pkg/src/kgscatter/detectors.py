"""Scaled cutoffs h(x/t), product cutoffs H_t = h1(x1/t) h2(x2/t) and detector expectation values.

The Araki-Haag detector pair is represented by its quadratic form on the
two-particle amplitude: <F_t, h1(x1/t) h2(x2/t) F_t>.
"""

from dataclasses import dataclass

import numpy as np

from . import specops
from .bump import plateau
from .grid import inner_product
from .regions import DEFAULT_DELTA, RegionSpec
from .series import DiagnosticSeries

DEFAULT_TRANSITION = 0.05


class CutoffError(ValueError):
    pass


@dataclass(frozen=True)
class Cutoff:
    """Radial plateau around ``center``: 1 for |y - c| <= inner, 0 beyond ``outer``."""

    center: tuple
    inner: float
    outer: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", tuple(c.tolist()))
        if not (0 <= self.inner < self.outer):
            raise CutoffError(f"cutoff needs 0 <= inner < outer, got inner={self.inner}, outer={self.outer}")

    @classmethod
    def around(cls, center, inner, transition=DEFAULT_TRANSITION):
        return cls(center, inner, inner + transition)

    @classmethod
    def from_dict(cls, spec):
        outer = spec.get("outer", spec["inner"] + spec.get("transition", DEFAULT_TRANSITION))
        return cls(spec["center"], float(spec["inner"]), float(outer))

    def as_dict(self):
        c = list(self.center)
        return {"center": c[0] if len(c) == 1 else c, "inner": self.inner, "outer": self.outer}

    @property
    def d(self):
        return len(self.center)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        c = np.asarray(self.center).reshape((-1,) + (1,) * (y.ndim - 1))
        r = np.sqrt(np.sum((y - c) ** 2, axis=0))
        return plateau(r, self.inner, self.outer)

    def distance_to(self, other):
        """Gap between the supports of two cutoffs (negative when they overlap)."""
        gap = np.linalg.norm(np.subtract(self.center, other.center))
        return float(gap - self.outer - other.outer)

    def covers(self, lo, hi):
        """True when the plateau contains the box [lo, hi]."""
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        c = np.asarray(self.center)
        far = np.maximum(np.abs(lo - c), np.abs(hi - c))
        return bool(np.linalg.norm(far) <= self.inner)


@dataclass(frozen=True)
class ProductCutoff:
    """H(x1, x2) = h1(x1) h2(x2) with disjoint supports."""

    h1: Cutoff
    h2: Cutoff

    def __post_init__(self):
        gap = self.h1.distance_to(self.h2)
        if not gap > 0:
            raise CutoffError(f"h1 and h2 supports overlap: support gap {gap:.6g} must be > 0")

    @property
    def margin(self):
        return self.h1.distance_to(self.h2)

    def samples(self, grid, t):
        return specops.sample_scaled((self.h1, self.h2), grid, t, arity=2)

    def __call__(self, y):
        d = len(y) // 2
        return self.h1(y[:d]) * self.h2(y[d:])

    def swapped(self):
        return ProductCutoff(self.h2, self.h1)


@dataclass(frozen=True)
class RegionCutoff:
    """Smoothed region indicator over R^{2d} with declared clearance from the diagonal."""

    region: RegionSpec
    delta: float = DEFAULT_DELTA
    require_clearance: bool = True

    def __post_init__(self):
        if self.require_clearance and not self.region.diagonal_clearance() > 0:
            raise CutoffError("region cutoff support touches the diagonal x1 = x2")

    @property
    def margin(self):
        return self.region.diagonal_clearance()

    def samples(self, grid, t):
        return specops.sample_scaled(lambda y: self.region.smooth(y, self.delta), grid, t, arity=2)

    def __call__(self, y):
        return self.region.smooth(y, self.delta)


def apply_Ht(cut, t, field):
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    return field.with_values(cut.samples(field.grid, t) * field.values)


def expectation_array(samples, values, cell):
    return float(np.sum(samples * (values.real ** 2 + values.imag ** 2)) * cell)


def detector_expectation(cut, t, field):
    """<F, H(x/t) F>; lies in [0, ||F||^2] for 0 <= H <= 1."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    s = cut.samples(field.grid, t)
    if np.min(s) < -1e-15 or np.max(s) > 1 + 1e-15:
        raise CutoffError("detector cutoff must take values in [0, 1]")
    return expectation_array(s, field.values, field.grid.cell(field.arity))


def two_detector_sweep(h1, h2, traj):
    cut = ProductCutoff(h1, h2)
    times, vals = [], []
    for t, f in traj.items():
        times.append(t)
        vals.append(detector_expectation(cut, t, f))
    return DiagnosticSeries("two_detector", np.array(times), np.array(vals),
                            {"margin": cut.margin})


def hermitian_check(cut, t, f, g):
    """<f, H g> - <H f, g> (zero for real H)."""
    return inner_product(f, apply_Ht(cut, t, g)) - inner_product(apply_Ht(cut, t, f), g)
