"""Matplotlib figures written next to the CSV/JSON outputs (Agg backend, no display needed)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_series(series, path, title=None):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.4))
    t, v = series.times, series.values
    pos = v > 0
    a1.loglog(t[pos], v[pos], ".-", lw=1)
    a1.set_xlabel("t")
    a1.set_ylabel("integrand")
    a2.semilogx(t, series.running_integral, "-", lw=1.2)
    a2.axvline(t[-1] / 10, color="0.6", ls=":", lw=1)
    a2.set_xlabel("t")
    a2.set_ylabel("running integral (dt/t)")
    fig.suptitle(title or series.name)
    return _save(fig, path)


def plot_steps(traj, path):
    log = traj.step_arrays()
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.4))
    a1.plot(log["t"], log["norm"] - log["norm"][0], lw=1)
    a1.set_xlabel("t")
    a1.set_ylabel("norm - norm(t0)")
    bm = np.maximum(log["boundary_mass"], 1e-300)
    a2.semilogy(log["t"], bm, lw=1)
    a2.axhline(traj.config.wraparound_tol, color="r", ls="--", lw=1)
    a2.set_xlabel("t")
    a2.set_ylabel("boundary mass")
    return _save(fig, path)


def plot_density(field, path, title="|u|^2"):
    g = field.grid
    dens = np.abs(field.values) ** 2
    fig, ax = plt.subplots(figsize=(4.6, 4))
    if field.arity == 2 and g.d == 1:
        ext = [g.x[0], g.x[-1], g.x[0], g.x[-1]]
        im = ax.imshow(dens.T, origin="lower", extent=ext, aspect="equal", cmap="magma")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        fig.colorbar(im, ax=ax)
    else:
        ax.plot(g.x, dens.reshape(len(g.x), -1).sum(axis=1), lw=1)
        ax.set_xlabel("x")
    ax.set_title(title)
    return _save(fig, path)


def plot_cauchy(limit_dict, path):
    tails = limit_dict["relative_tail"]
    ts = limit_dict["checkpoints"][1:]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.loglog(ts, np.maximum(tails, 1e-300), "o-", lw=1)
    ax.axhline(limit_dict["tol"], color="r", ls="--", lw=1)
    ax.set_xlabel("checkpoint t")
    ax.set_ylabel("relative Cauchy difference")
    return _save(fig, path)


def plot_graf(gf, path, stride=4):
    lam = gf.min_eig()[::stride, ::stride]
    ax_ = gf.axis[::stride]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 4))
    ext = [ax_[0], ax_[-1], ax_[0], ax_[-1]]
    im = a1.imshow(gf.R[::stride, ::stride].T, origin="lower", extent=ext, cmap="viridis")
    a1.set_title("R")
    fig.colorbar(im, ax=a1)
    clipped = np.sign(lam) * np.log10(1 + np.abs(lam))
    im = a2.imshow(clipped.T, origin="lower", extent=ext, cmap="coolwarm")
    a2.set_title("sign(l) log10(1+|l|), l = min eig")
    fig.colorbar(im, ax=a2)
    for a in (a1, a2):
        a.set_xlabel("y1")
        a.set_ylabel("y2")
    return _save(fig, path)


def plot_monitor(report, path, title):
    s = report["series"]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.semilogx(s["t"], s["Q"], lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("<u, M u>")
    ax.set_title(title)
    return _save(fig, path)
