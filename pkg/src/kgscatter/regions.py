"""Regions of scaled two-particle space y = x/t in R^{2d} and their smoothed indicators.

Smoothed indicators put the transition layer *inside* the nominal set, so the
smoothed function is supported in the closed set and equals 1 on the set
shrunk by ``delta``.
"""

from dataclasses import dataclass, field

import numpy as np

from .bump import smoothstep

DEFAULT_DELTA = 0.05


def _split(y, d):
    """Split a (2d, ...) coordinate stack into radius |y| and diagonal distance |y1 - y2|."""
    y = np.asarray(y)
    rad = np.sqrt(np.sum(y * y, axis=0))
    diff = y[:d] - y[d:]
    return rad, np.sqrt(np.sum(diff * diff, axis=0))


def _up(s, edge, delta):
    return smoothstep((s - edge) / delta)


def _down(s, edge, delta):
    return smoothstep((edge - s) / delta)


@dataclass(frozen=True)
class RegionSpec:
    """A region of R^{2d}.

    kind:
      ``annulus``  r_in <= |y| <= r_out and |y1 - y2| >= diag_gap  (C_{r_in,r_out} minus D_gap)
      ``ball``     |y| <= r_out
      ``tube``     |y1 - y2| <= eps
      ``box``      lo <= y <= hi componentwise, and |y1 - y2| >= diag_gap
      ``union``    any of ``parts``
    """

    kind: str
    d: int = 1
    r_in: float = 0.0
    r_out: float = 0.0
    diag_gap: float = 0.0
    eps: float = 0.0
    lo: tuple = ()
    hi: tuple = ()
    parts: tuple = field(default=())

    def __post_init__(self):
        k = self.kind
        if k not in ("annulus", "ball", "tube", "box", "union"):
            raise ValueError(f"unknown region kind {k!r}")
        if k == "annulus" and not (0 <= self.r_in < self.r_out):
            raise ValueError(f"annulus needs 0 <= r_in < r_out, got {self.r_in}, {self.r_out}")
        if k == "ball" and not self.r_out > 0:
            raise ValueError("ball needs r_out > 0")
        if k == "tube" and not self.eps > 0:
            raise ValueError("tube needs eps > 0")
        if k == "box" and (len(self.lo) != 2 * self.d or len(self.hi) != 2 * self.d):
            raise ValueError(f"box corners need {2 * self.d} components")
        if k == "union" and not self.parts:
            raise ValueError("union needs at least one part")
        if self.diag_gap < 0:
            raise ValueError("diag_gap must be >= 0")

    # constructors
    @classmethod
    def annulus(cls, r_in, r_out, diag_gap=0.0, d=1):
        return cls("annulus", d=d, r_in=float(r_in), r_out=float(r_out), diag_gap=float(diag_gap))

    @classmethod
    def ball(cls, r, d=1):
        return cls("ball", d=d, r_out=float(r))

    @classmethod
    def tube(cls, eps, d=1):
        return cls("tube", d=d, eps=float(eps))

    @classmethod
    def box(cls, lo, hi, diag_gap=0.0, d=1):
        return cls("box", d=d, lo=tuple(map(float, lo)), hi=tuple(map(float, hi)), diag_gap=float(diag_gap))

    @classmethod
    def union(cls, *parts):
        return cls("union", d=parts[0].d, parts=tuple(parts))

    @classmethod
    def from_dict(cls, spec, d=1):
        spec = dict(spec)
        kind = spec.pop("kind")
        if kind == "union":
            return cls.union(*(cls.from_dict(p, d) for p in spec["parts"]))
        if kind in ("box",):
            spec["lo"] = tuple(spec["lo"])
            spec["hi"] = tuple(spec["hi"])
        return cls(kind, d=d, **spec)

    def as_dict(self):
        if self.kind == "union":
            return {"kind": "union", "parts": [p.as_dict() for p in self.parts]}
        out = {"kind": self.kind}
        for key in {"annulus": ("r_in", "r_out", "diag_gap"), "ball": ("r_out",), "tube": ("eps",),
                    "box": ("lo", "hi", "diag_gap")}[self.kind]:
            val = getattr(self, key)
            out[key] = list(val) if isinstance(val, tuple) else val
        return out

    # geometry
    def indicator(self, y):
        rad, dist = _split(y, self.d)
        k = self.kind
        if k == "annulus":
            return ((rad >= self.r_in) & (rad <= self.r_out) & (dist >= self.diag_gap)).astype(float)
        if k == "ball":
            return (rad <= self.r_out).astype(float)
        if k == "tube":
            return (dist <= self.eps).astype(float)
        if k == "box":
            y = np.asarray(y)
            inside = np.ones(np.broadcast(rad, dist).shape, dtype=bool)
            for j in range(2 * self.d):
                inside &= (y[j] >= self.lo[j]) & (y[j] <= self.hi[j])
            return (inside & (dist >= self.diag_gap)).astype(float)
        return np.clip(sum(p.indicator(y) for p in self.parts), 0.0, 1.0)

    def smooth(self, y, delta=DEFAULT_DELTA):
        rad, dist = _split(y, self.d)
        k = self.kind
        if k == "annulus":
            out = _down(rad, self.r_out, delta)
            if self.r_in > 0:
                out = out * _up(rad, self.r_in, delta)
            if self.diag_gap > 0:
                out = out * _up(dist, self.diag_gap, delta)
            return out
        if k == "ball":
            return _down(rad, self.r_out, delta)
        if k == "tube":
            return _down(dist, self.eps, delta)
        if k == "box":
            y = np.asarray(y)
            out = np.ones(np.broadcast(rad, dist).shape)
            for j in range(2 * self.d):
                out = out * _up(y[j], self.lo[j], delta) * _down(y[j], self.hi[j], delta)
            if self.diag_gap > 0:
                out = out * _up(dist, self.diag_gap, delta)
            return out
        # union of smoothed parts, combined as 1 - prod(1 - s_i) to stay in [0, 1]
        acc = 1.0
        for p in self.parts:
            acc = acc * (1.0 - p.smooth(y, delta))
        return 1.0 - acc

    def diagonal_clearance(self):
        """Lower bound on |y1 - y2| over the region (0 means it touches the diagonal)."""
        k = self.kind
        if k in ("annulus", "box"):
            clearance = self.diag_gap
            if k == "box" and self.d == 1:
                # for d = 1 the box itself may avoid the diagonal
                (a1, a2), (b1, b2) = self.lo, self.hi
                lo_diff, hi_diff = a1 - b2, b1 - a2
                if lo_diff > 0 or hi_diff < 0:
                    clearance = max(clearance, lo_diff if lo_diff > 0 else -hi_diff)
            return clearance
        if k in ("ball", "tube"):
            return 0.0
        return min(p.diagonal_clearance() for p in self.parts)

    def radius_bound(self):
        """Upper bound on |y| over the region (inf for unbounded tubes)."""
        k = self.kind
        if k in ("annulus", "ball"):
            return self.r_out
        if k == "tube":
            return np.inf
        if k == "box":
            corner = np.maximum(np.abs(self.lo), np.abs(self.hi))
            return float(np.sqrt(np.sum(corner ** 2)))
        return max(p.radius_bound() for p in self.parts)

    def sample_points(self, spacing):
        """Points of a square lattice with the given spacing that fall inside the region."""
        if self.d != 1:
            raise NotImplementedError("dense region sampling is implemented for d = 1")
        r = self.radius_bound()
        if not np.isfinite(r):
            raise ValueError("cannot sample an unbounded region")
        ax = np.arange(-r, r + spacing / 2, spacing)
        y1, y2 = np.meshgrid(ax, ax, indexing="ij")
        pts = np.stack([y1.ravel(), y2.ravel()])
        return pts[:, self.indicator(pts) > 0]
