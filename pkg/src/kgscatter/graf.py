"""Convex Graf-type function R on scaled two-particle space (d = 1, so y lives in R^2).

R = eta * max(g, 0) with g = (u^2 + beta v^2 - c) F, where u = (y1 + y2)/sqrt 2,
v = (y1 - y2)/sqrt 2, F is a radial smooth step equal to 1 on the ball of radius
r1 and 0 beyond r1', and eta is a normalised bump of radius eps'.

The Hessian is assembled from its two nonnegative pieces: the mollified
volume term 1_{g>0} grad^2 g and the mollified measure carried by the kink
curve {q = c} (q = u^2 + beta v^2).  This keeps convexity exact to rounding
where F = 1, which a finite-difference Hessian cannot deliver near the
smoothed kink.  A central-difference Hessian is still computed as a cross-check.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import fftconvolve

from .bump import bump, smoothstep, smoothstep_prime, smoothstep_second
from .regions import RegionSpec

SQRT2 = math.sqrt(2.0)
MIN_MOLLIFIER_CELLS = 4


class GrafError(ValueError):
    pass


@dataclass(frozen=True)
class GrafParams:
    r: float
    r1: float
    r1p: float
    rp: float
    beta: float
    eps: float
    eps_mol: float

    def __post_init__(self):
        if not (SQRT2 < self.r < self.r1 < self.r1p < self.rp):
            raise GrafError(
                f"radii must satisfy sqrt(2) < r < r1 < r1' < r'; got r={self.r}, r1={self.r1}, "
                f"r1'={self.r1p}, r'={self.rp}"
            )
        if not self.beta > 0:
            raise GrafError(f"beta must be positive, got {self.beta}")
        if not 0 < self.eps <= self.eps_beta * (1 + 1e-12):
            raise GrafError(f"eps={self.eps} must lie in (0, eps_beta={self.eps_beta:.6g}]")
        if not 0 < self.eps_mol < self.eps / 4:
            raise GrafError(f"mollifier scale eps'={self.eps_mol} must be below eps/4={self.eps / 4:.6g}")

    @property
    def c(self):
        return self.rp ** 2

    @property
    def eps_beta(self):
        return math.sqrt(2.0 * (self.rp ** 2 - self.r1p ** 2) / self.beta)

    def as_dict(self):
        return {"r": self.r, "r1": self.r1, "r1p": self.r1p, "rp": self.rp, "beta": self.beta,
                "c": self.c, "eps": self.eps, "eps_beta": self.eps_beta, "eps_mol": self.eps_mol}

    @classmethod
    def from_dict(cls, spec):
        keys = ("r", "r1", "r1p", "rp", "beta", "eps", "eps_mol")
        return cls(**{k: float(spec[k]) for k in keys})


DEFAULT_RADII = {"r_pad": 0.05, "r1_pad": 0.05, "transition": 0.1, "rp": 4.0}


def choose_params(K: RegionSpec, r_defaults=None) -> GrafParams:
    """Parameters for which K lies inside {g > c}, hence inside {R > 0}."""
    opts = dict(DEFAULT_RADII)
    opts.update(r_defaults or {})
    if K.d != 1:
        raise GrafError("Graf construction is implemented for d = 1 (y in R^2)")
    gap = K.diagonal_clearance()
    if not gap > 0:
        raise GrafError("K touches the diagonal: min |y1 - y2| over K must be positive")
    rad = K.radius_bound()
    if not np.isfinite(rad):
        raise GrafError("K must be bounded")
    r = max(rad, SQRT2) + opts["r_pad"]
    r1 = r + opts["r1_pad"]
    r1p = r1 + opts["transition"]
    rp = float(opts["rp"])
    if not rp > r1p:
        raise GrafError(f"K is not enclosed: need r' > r1' = {r1p:.6g}, got r' = {rp}")
    v_min = gap / SQRT2
    beta = 2.0 * rp ** 2 / v_min ** 2
    eps_beta = math.sqrt(2.0 * (rp ** 2 - r1p ** 2) / beta)
    eps = eps_beta / 2.0
    return GrafParams(r, r1, r1p, rp, beta, eps, eps / 8.0)


def rotate(y1, y2):
    return (y1 + y2) / SQRT2, (y1 - y2) / SQRT2


def quadratic(params, y1, y2):
    u, v = rotate(y1, y2)
    return u * u + params.beta * v * v


def radial_F(params, rho):
    """F and its radial derivatives F', F'' as functions of rho = |y|."""
    w = params.r1p - params.r1
    s = (rho - params.r1) / w
    return 1.0 - smoothstep(s), -smoothstep_prime(s) / w, -smoothstep_second(s) / w ** 2


def g_function(params, y1, y2):
    rho = np.hypot(y1, y2)
    F, _, _ = radial_F(params, rho)
    return (quadratic(params, y1, y2) - params.c) * F


def _mollifier(eps_mol, h):
    """Discrete bump kernel with unit sum, plus the raw sum used to turn it into a density."""
    k = int(math.ceil(eps_mol / h))
    ax = np.arange(-k, k + 1) * h
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    raw = bump(np.hypot(X, Y) / eps_mol)
    return raw / raw.sum(), float(raw.sum())


@dataclass(frozen=True, eq=False)
class GrafFunction:
    params: GrafParams
    axis: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    grad: np.ndarray = field(repr=False)  # (2, n, n)
    hess: np.ndarray = field(repr=False)  # (2, 2, n, n)
    hess_fd: np.ndarray = field(repr=False)

    @property
    def h(self):
        return float(self.axis[1] - self.axis[0])

    @property
    def half_width(self):
        return float(self.axis[-1])

    def mesh(self):
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    def min_eig(self, fd=False):
        H = self.hess_fd if fd else self.hess
        a, b, d = H[0, 0], H[0, 1], H[1, 1]
        return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b * b)

    def _interp(self, arr):
        return RegularGridInterpolator((self.axis, self.axis), arr, bounds_error=False, fill_value=0.0)

    def __call__(self, y):
        """R at points y of shape (2, ...); zero outside the stored window (R vanishes there)."""
        y = np.asarray(y, dtype=float)
        pts = np.moveaxis(np.broadcast_arrays(y[0], y[1]), 0, -1)
        return self._interp(self.R)(pts)

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        pts = np.moveaxis(np.broadcast_arrays(y[0], y[1]), 0, -1)
        return np.stack([self._interp(self.grad[j])(pts) for j in range(2)])

    def table(self):
        """Flat rows (y1, y2, R, dR/dy1, dR/dy2, H11, H12, H22)."""
        Y1, Y2 = self.mesh()
        cols = [Y1, Y2, self.R, self.grad[0], self.grad[1], self.hess[0, 0], self.hess[0, 1], self.hess[1, 1]]
        return np.stack([c.ravel() for c in cols], axis=1)


def build(params: GrafParams, resolution=4, pad_cells=6) -> GrafFunction:
    """Sample R on a square window covering supp R; grid spacing eps'/resolution."""
    h = params.eps_mol / resolution
    if params.eps_mol / h < MIN_MOLLIFIER_CELLS - 1e-9:
        raise GrafError(f"mollifier radius {params.eps_mol:.4g} spans fewer than {MIN_MOLLIFIER_CELLS} cells "
                        f"at spacing {h:.4g}; refine the evaluation grid")
    W = params.r1p + params.eps_mol + pad_cells * h
    k = int(math.ceil(W / h))
    axis = np.arange(-k, k + 1) * h
    Y1, Y2 = np.meshgrid(axis, axis, indexing="ij")
    u, v = rotate(Y1, Y2)
    beta, c = params.beta, params.c
    q = u * u + beta * v * v
    rho = np.hypot(Y1, Y2)
    F, F1, F2 = radial_F(params, rho)
    g = (q - c) * F
    pos = g > 0

    # gradients in y-coordinates: q_u = 2u, q_v = 2 beta v; d/dy1 = (d/du + d/dv)/sqrt2, d/dy2 = (d/du - d/dv)/sqrt2
    qu, qv = 2 * u, 2 * beta * v
    gq = np.stack([(qu + qv) / SQRT2, (qu - qv) / SQRT2])
    with np.errstate(invalid="ignore", divide="ignore"):
        er = np.where(rho > 0, np.stack([Y1, Y2]) / np.where(rho > 0, rho, 1.0), 0.0)
    gF = F1 * er
    # Hessian of q in y: rotation of diag(2, 2 beta)
    Hq = np.array([[1 + beta, 1 - beta], [1 - beta, 1 + beta]], dtype=float)
    # Hessian of F(rho): F'' e e^T + F'/rho (I - e e^T)
    with np.errstate(invalid="ignore", divide="ignore"):
        F1_over_rho = np.where(rho > 0, F1 / np.where(rho > 0, rho, 1.0), 0.0)
    HF = np.empty((2, 2) + Y1.shape)
    for i in range(2):
        for j in range(2):
            HF[i, j] = F2 * er[i] * er[j] + F1_over_rho * ((i == j) - er[i] * er[j])
    Hg = np.empty_like(HF)
    for i in range(2):
        for j in range(2):
            Hg[i, j] = F * Hq[i, j] + gq[i] * gF[j] + gF[i] * gq[j] + (q - c) * HF[i, j]

    eta, eta_sum = _mollifier(params.eps_mol, h)

    def conv(a):
        return fftconvolve(a, eta, mode="same")

    R0 = np.where(pos, g, 0.0)
    R = conv(R0)
    grad_g = gq * F + (q - c) * gF
    grad = np.stack([conv(np.where(pos, grad_g[j], 0.0)) for j in range(2)])
    hess = np.empty_like(Hg)
    for i in range(2):
        for j in range(i, 2):
            hess[i, j] = conv(np.where(pos, Hg[i, j], 0.0))
            hess[j, i] = hess[i, j]
    hess += _kink_term(params, axis, h, eta_sum)
    del Hg, HF

    # clean rounding noise where R must vanish identically
    zero_mask = (R0 == 0) & (conv((R0 > 0).astype(float)) == 0)
    R[zero_mask] = 0.0
    R = np.maximum(R, 0.0)
    hess_fd = _fd_hessian(R, h)
    return GrafFunction(params, axis, R, grad, hess, hess_fd)


def _kink_term(params, axis, h, eta_sum):
    """Mollified measure F |grad q| n n^T ds on the curve q = c inside supp F."""
    beta, c = params.beta, params.c
    n = len(axis)
    out = np.zeros((2, 2, n, n))
    # the curve is the ellipse u = a cos(phi), v = b sin(phi)
    a, b = math.sqrt(c), math.sqrt(c / beta)
    m = int(math.ceil(8 * math.pi * a / h))
    phi = (np.arange(2 * m) + 0.5) * (math.pi / m)
    dphi = math.pi / m
    uu, vv = a * np.cos(phi), b * np.sin(phi)
    ds = np.hypot(a * np.sin(phi), b * np.cos(phi)) * dphi
    y1, y2 = (uu + vv) / SQRT2, (uu - vv) / SQRT2
    F, _, _ = radial_F(params, np.hypot(y1, y2))
    keep = F > 0
    y1, y2, ds, F, uu, vv = y1[keep], y2[keep], ds[keep], F[keep], uu[keep], vv[keep]
    qu, qv = 2 * uu, 2 * beta * vv
    gy = np.stack([(qu + qv) / SQRT2, (qu - qv) / SQRT2])
    gnorm = np.hypot(gy[0], gy[1])
    nvec = gy / gnorm
    w = F * gnorm * ds / (eta_sum * h * h)
    k = int(math.ceil(params.eps_mol / h))
    x0 = axis[0]
    i0 = np.rint((y1 - x0) / h).astype(int)
    j0 = np.rint((y2 - x0) / h).astype(int)
    for di in range(-k - 1, k + 2):
        ii = i0 + di
        dx1 = x0 + ii * h - y1
        for dj in range(-k - 1, k + 2):
            jj = j0 + dj
            dx2 = x0 + jj * h - y2
            val = bump(np.hypot(dx1, dx2) / params.eps_mol) * w
            ok = (val != 0) & (ii >= 0) & (ii < n) & (jj >= 0) & (jj < n)
            if not np.any(ok):
                continue
            flat = ii[ok] * n + jj[ok]
            for p_, q_ in ((0, 0), (0, 1), (1, 1)):
                contrib = val[ok] * nvec[p_][ok] * nvec[q_][ok]
                out[p_, q_] += np.bincount(flat, weights=contrib, minlength=n * n).reshape(n, n)
    out[1, 0] = out[0, 1]
    return out


def _fd_hessian(R, h):
    H = np.zeros((2, 2) + R.shape)
    H[0, 0, 1:-1, :] = (R[2:, :] - 2 * R[1:-1, :] + R[:-2, :]) / h ** 2
    H[1, 1, :, 1:-1] = (R[:, 2:] - 2 * R[:, 1:-1] + R[:, :-2]) / h ** 2
    H[0, 1, 1:-1, 1:-1] = (R[2:, 2:] - R[2:, :-2] - R[:-2, 2:] + R[:-2, :-2]) / (4 * h * h)
    H[1, 0] = H[0, 1]
    return H


def hessian_check(gf: GrafFunction, K: RegionSpec, rel_tol=1e-6, fd_crosscheck=True):
    """Sampled form of grad^2 R >= c1 1_K - c2 1_{C_{r,r'} minus D_eps} over every grid point."""
    p = gf.params
    Y1, Y2 = gf.mesh()
    pts = np.stack([Y1, Y2])
    rho = np.hypot(Y1, Y2)
    dist = np.abs(Y1 - Y2)
    lam = gf.min_eig()
    scale = float(np.max(np.abs(gf.hess)))
    tol = rel_tol * scale

    in_K = K.indicator(pts) > 0
    in_Cr = rho <= p.r
    shell = (rho >= p.r) & (rho <= p.rp) & (dist > p.eps)
    c1 = float(np.min(lam[in_K])) if np.any(in_K) else float("nan")
    c2 = float(max(0.0, -np.min(lam[shell]))) if np.any(shell) else 0.0

    lam_cr = lam[in_Cr]
    bad = lam_cr < -tol
    convex_fraction = 1.0 - float(np.count_nonzero(bad)) / lam_cr.size
    bad_dist = None
    if np.any(bad):
        # distance of violations from the edge of the sampled window, in mollifier widths
        edge = gf.half_width - np.maximum(np.abs(Y1[in_Cr][bad]), np.abs(Y2[in_Cr][bad]))
        bad_dist = float(np.min(edge) / p.eps_mol)

    lhs = lam + c2 * shell
    rhs = c1 * in_K
    e51_violations = int(np.count_nonzero(lhs < rhs - tol))

    peak = float(np.max(gf.R))
    tube = dist <= p.eps / 2
    outside = rho > p.rp + p.eps_mol
    report = {
        "params": p.as_dict(),
        "grid_spacing": gf.h,
        "n_points": int(lam.size),
        "c1": c1,
        "c2": c2,
        "hessian_scale": scale,
        "convexity_tolerance": tol,
        "convex_fraction_Cr": convex_fraction,
        "convex_violations_Cr": int(np.count_nonzero(bad)),
        "violation_edge_distance_in_mollifier_widths": bad_dist,
        "e51_violations": e51_violations,
        "violation_fraction": float(e51_violations) / lam.size,
        "R_min": float(np.min(gf.R)),
        "R_peak": peak,
        "R_max_on_half_tube": float(np.max(np.abs(gf.R[tube]))) if np.any(tube) else 0.0,
        "R_max_outside_Crp": float(np.max(np.abs(gf.R[outside]))) if np.any(outside) else 0.0,
        "K_points": int(np.count_nonzero(in_K)),
        "g_min_on_K": float(np.min(quadratic(p, Y1[in_K], Y2[in_K]) - p.c)) if np.any(in_K) else float("nan"),
    }
    if fd_crosscheck:
        lam_fd = gf.min_eig(fd=True)
        interior = np.zeros_like(in_K)
        interior[1:-1, 1:-1] = True
        kk = in_K & interior
        report["c1_fd"] = float(np.min(lam_fd[kk])) if np.any(kk) else float("nan")
        report["fd_min_eig_Cr"] = float(np.min(lam_fd[in_Cr & interior]))
        report["fd_convex_fraction_Cr"] = float(np.mean(lam_fd[in_Cr & interior] >= -tol))
    return report


def reference_K():
    """K = {1 <= |y| <= 2, |y1 - y2| >= 0.5}."""
    return RegionSpec.annulus(1.0, 2.0, diag_gap=0.5)


def export_rows(gf: GrafFunction, stride=1):
    return gf.table().reshape(len(gf.axis), len(gf.axis), 8)[::stride, ::stride].reshape(-1, 8)
