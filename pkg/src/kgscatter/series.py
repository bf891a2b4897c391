"""Time series of nonnegative diagnostics with a running dt/t integral."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DiagnosticSeries:
    name: str
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def running_integral(self):
        """Cumulative trapezoid of values * dt / t, i.e. in the variable log t."""
        if len(self.times) < 2:
            return np.zeros_like(self.values)
        lt = np.log(self.times)
        incr = 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(lt)
        return np.concatenate([[0.0], np.cumsum(incr)])

    @property
    def total(self):
        return float(self.running_integral[-1])

    def tail_fraction(self, decades=1.0):
        """Share of the dt/t integral accumulated over the final ``decades`` of time."""
        run = self.running_integral
        total = run[-1]
        if total <= 0:
            return 0.0
        start = self.times[-1] / 10.0 ** decades
        before = np.interp(np.log(start), np.log(self.times), run)
        return float(np.clip((total - before) / total, 0.0, 1.0))

    def fitted_slope(self, t_min=None, t_max=None, floor=0.0):
        """Least-squares slope of log(value) against log(t) on [t_min, t_max].

        Points at or below ``floor`` are dropped (rounding-noise floor).
        """
        t_max = self.times[-1] if t_max is None else t_max
        t_min = t_max / 10.0 if t_min is None else t_min
        sel = (self.times >= t_min * (1 - 1e-12)) & (self.times <= t_max * (1 + 1e-12)) & (self.values > floor)
        if np.count_nonzero(sel) < 3:
            return float("nan")
        slope, _ = np.polyfit(np.log(self.times[sel]), np.log(self.values[sel]), 1)
        return float(slope)

    def rows(self):
        run = self.running_integral
        lt = np.log(self.times)
        weights = np.gradient(lt) if len(lt) > 1 else np.zeros_like(lt)
        for t, v, r, w in zip(self.times, self.values, run, weights):
            yield t, v, r, w
