"""Command-line runner: ``kgscatter {simulate,graf-check,limits,estimates} --scenario FILE``.

Exit codes: 0 success, 2 validation error, 3 runtime guard abort, 4 a diagnostic
completed but its convergence flag is false.
"""

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import asymptotics, dynamics, fileio, graf, propest
from . import grid as _g
from .detectors import CutoffError, RegionCutoff, two_detector_sweep
from .dynamics import ConfigError, GuardError
from .graf import GrafError
from .kgwave import PacketError, WraparoundError
from .propest import ObservableError
from .scenario import RunManifest, Scenario, ScenarioError
from .series import DiagnosticSeries

log = logging.getLogger("kgscatter")

EXIT_OK, EXIT_INVALID, EXIT_GUARD, EXIT_NONCONV = 0, 2, 3, 4
TAIL_LIMIT = 0.05


class _Outputs:
    """Tracks every file written so the manifest indexes all outputs."""

    def __init__(self, root, scenario, command):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(scenario.as_dict(), command)
        self.manifest.notes.extend(scenario.warnings)
        self.figures = bool(scenario.data.get("figures", True))
        self.t_start = time.perf_counter()

    def path(self, name):
        return self.root / name

    def add(self, name, path):
        path = Path(path)
        self.manifest.outputs[name] = {"path": str(path.relative_to(self.root)), "sha256": fileio.digest(path)}
        return path

    def series(self, s, stem, title=None):
        self.add(f"{stem}.csv", fileio.write_series(self.path(f"{stem}.csv"), s))
        if self.figures:
            from . import plotting
            self.add(f"{stem}.png", plotting.plot_series(s, self.path(f"{stem}.png"), title))

    def json(self, name, obj):
        return self.add(name, fileio.write_json(self.path(name), obj))

    def figure(self, name, fn, *args, **kw):
        if self.figures:
            from . import plotting
            self.add(name, getattr(plotting, fn)(*args, path=self.path(name), **kw))

    def finish(self, status="ok"):
        self.manifest.status = status
        self.manifest.wall_clock_s = time.perf_counter() - self.t_start
        fileio.write_json(self.path("manifest.json"), self.manifest.as_dict())


def _simulate(scenario, out, record_cook=False):
    cfg = scenario.evolution()
    source = scenario.source()
    if record_cook and source.variant == "pair_potential":
        cfg.record_cook = True
    u0 = scenario.initial_state()
    out.manifest.checksums = {
        "grid": fileio.array_digest(scenario.grid.x, scenario.grid.p),
        "schedule": fileio.array_digest(cfg.schedule()),
        "initial_state": fileio.array_digest(u0.values),
    }
    try:
        traj = dynamics.run(u0, source, cfg, scenario.m)
    except GuardError as exc:
        if exc.trajectory is not None:
            out.add("steps.csv", fileio.write_steps(out.path("steps.csv"), exc.trajectory))
            out.manifest.steps = len(exc.trajectory.step_log["t"])
        out.manifest.notes.append(f"aborted: {exc}")
        raise
    out.manifest.steps = len(traj.step_log["t"]) - 1
    out.add("steps.csv", fileio.write_steps(out.path("steps.csv"), traj))
    out.figure("steps.png", "plot_steps", traj)
    return traj


def _write_snapshots(traj, out):
    for t in propest.dyadic_checkpoints(traj.times, traj.times[0]):
        name = f"snapshots/u_t{t:g}.bin"
        out.add(name, fileio.write_field(out.path(name), traj.at(t), t=t))


def _estimates(scenario, traj, out, which):
    flags = {}
    region = scenario.region()
    if "two_detector" in which and scenario.detectors() is not None:
        c = scenario.detectors()
        out.series(two_detector_sweep(c.h1, c.h2, traj), "two_detector")
    if "large_velocity" in which:
        lv = scenario.data["large_velocity"]
        s = propest.large_velocity_series(traj, float(lv["r"]), float(lv["r_prime"]), float(lv["eps"]))
        out.series(s, "large_velocity", "large-velocity integrand")
        flags["large_velocity_tail_ok"] = s.tail_fraction() < TAIL_LIMIT
        out.json("large_velocity.json", {"tail_fraction": s.tail_fraction(), "total": s.total, **s.meta})
    if "phase_space" in which:
        s = propest.phase_space_series(traj, region)
        out.series(s, "phase_space", "phase-space integrand")
        flags["phase_space_tail_ok"] = s.tail_fraction() < TAIL_LIMIT
        out.json("phase_space.json", {"tail_fraction": s.tail_fraction(), "total": s.total,
                                      "fitted_slope": s.fitted_slope(), **s.meta})
    if "monitor_A1" in which:
        params = graf.choose_params(region, scenario.data["graf"].get("radii"))
        gf = graf.build(params, resolution=int(scenario.data["graf"].get("resolution", 4)))
        rep_g = graf.hessian_check(gf, region, fd_crosscheck=False)
        M = propest.graf_observable(gf)
        c1 = rep_g["c1"]
        Ks = propest.PositionFactor(lambda y: region.smooth(y), region.diagonal_clearance())

        def B(ops, t, u):
            chi = propest._scaled(Ks.fn, ops, t)
            return c1 / t * propest.phase_space_terms(ops, t, u, chi)[0]

        rep = propest.monitor_A1(M, traj, B)
        rep["c1"] = c1
        rep["source_tail_fraction"] = propest.source_term_tail(rep)
        flags["A1_closes"] = rep["closes"]
        out.json("monitor_A1.json", rep)
        out.figure("monitor_A1.png", "plot_monitor", rep, title="Graf observable")
    if "monitor_A3" in which:
        rep = propest.monitor_A3(propest.relative_velocity_observable(region), traj)
        flags["A3_converged"] = rep["converged"]
        out.json("monitor_A3.json", rep)
        out.figure("monitor_A3.png", "plot_monitor", rep, title="e6.3 observable")
    if "monitor_A2" in which and scenario.detectors() is not None:
        rep = propest.monitor_A2(propest.cutoff_observable(scenario.detectors()), traj)
        vec = rep.pop("vector_limit")
        out.add("monitor_A2_vector.bin", fileio.write_field(out.path("monitor_A2_vector.bin"), vec,
                                                            t=float(traj.times[-1])))
        out.json("monitor_A2.json", rep)
    if "source_offdiag" in which and traj.source.variant != "none":
        cut = RegionCutoff(region)
        vals = [dynamics.source_offdiag_norm(traj, cut, t) for t in traj.times]
        s = DiagnosticSeries("source_offdiag", traj.times, np.array(vals))
        out.series(s, "source_offdiag", "||H(x/t) r(t)||")
    return flags


def cmd_simulate(scenario, out):
    traj = _simulate(scenario, out)
    _write_snapshots(traj, out)
    out.figure("final_density.png", "plot_density", traj.final, title=f"|u(T)|^2, T = {traj.times[-1]:g}")
    flags = _estimates(scenario, traj, out, ["two_detector"] + list(scenario.data["diagnostics"]))
    out.json("flags.json", flags)
    return EXIT_OK if all(flags.values()) else EXIT_NONCONV


def cmd_estimates(scenario, out):
    traj = _simulate(scenario, out)
    which = scenario.data["diagnostics"] or ["large_velocity", "phase_space", "monitor_A1", "monitor_A2",
                                             "monitor_A3"]
    flags = _estimates(scenario, traj, out, which)
    out.json("flags.json", flags)
    return EXIT_OK if all(flags.values()) else EXIT_NONCONV


def cmd_limits(scenario, out):
    cut = scenario.detectors()
    if cut is None:
        raise ScenarioError("detectors: the limits command needs detectors.h1 and detectors.h2")
    traj = _simulate(scenario, out, record_cook=True)
    tol = float(scenario.data["limits"]["tol"])
    oracle = asymptotics.oracle_for(traj, cut) if traj.source.variant == "none" else None
    lim = asymptotics.intermediate_limit(traj, cut, tol=tol, oracle=oracle)
    report = {"limit": lim.as_dict(), "norm_initial": _g.l2_norm(traj.initial), "norm_F_plus": _g.l2_norm(lim.final)}
    converged = lim.converged
    if traj.source.variant == "pair_potential":
        comp = asymptotics.completeness_report(traj, cut, limit_tol=tol,
                                               tail_tol=float(scenario.data["limits"]["cook_tail_tol"]))
        report["completeness"] = comp
        converged = converged and comp["converged"]
    out.add("F_plus.bin", fileio.write_field(out.path("F_plus.bin"), lim.final, t=float(traj.times[-1])))
    out.json("limits.json", report)
    out.figure("limit_cauchy.png", "plot_cauchy", lim.as_dict())
    return EXIT_OK if converged else EXIT_NONCONV


def cmd_graf_check(scenario, out):
    region = scenario.region()
    gcfg = scenario.data["graf"]
    params = graf.choose_params(region, gcfg.get("radii"))
    res = int(gcfg.get("resolution", 4))
    gf = graf.build(params, resolution=res)
    report = graf.hessian_check(gf, region)
    if gcfg.get("refine", True):
        fine = graf.build(params, resolution=2 * res)
        rep2 = graf.hessian_check(fine, region, fd_crosscheck=False)
        report["c1_refined"] = rep2["c1"]
        report["c1_relative_change"] = abs(rep2["c1"] - report["c1"]) / abs(report["c1"])
        del fine
    out.json("graf_report.json", report)
    stride = int(gcfg.get("table_stride", 8))
    out.add("graf_table.csv", fileio.write_rows(out.path("graf_table.csv"),
                                                ["y1", "y2", "R", "dR_dy1", "dR_dy2", "H11", "H12", "H22"],
                                                graf.export_rows(gf, stride)))
    out.figure("graf.png", "plot_graf", gf)
    ok = report["c1"] > 0 and report["convex_fraction_Cr"] >= 0.999
    return EXIT_OK if ok else EXIT_NONCONV


COMMANDS = {"simulate": cmd_simulate, "graf-check": cmd_graf_check, "limits": cmd_limits,
            "estimates": cmd_estimates}

VALIDATION_ERRORS = (ScenarioError, ConfigError, CutoffError, GrafError, PacketError, ObservableError)


def build_parser():
    p = argparse.ArgumentParser(prog="kgscatter", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--scenario", required=True, help="scenario YAML or a run manifest.json")
        sp.add_argument("--out", help="output directory (default: the scenario's 'output')")
        sp.add_argument("--jobs", type=int, default=1, help="worker threads for FFTs")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-key override, value parsed as YAML (repeatable)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    _g.set_fft_workers(args.jobs)
    try:
        scenario = Scenario.load(args.scenario, args.override)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for w in scenario.warnings:
        log.warning("warning: %s", w)
    out = _Outputs(args.out or scenario.data["output"], scenario, args.command)
    try:
        code = COMMANDS[args.command](scenario, out)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        out.finish("invalid")
        return EXIT_INVALID
    except (GuardError, WraparoundError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        out.finish("aborted")
        return EXIT_GUARD
    except asymptotics.NonConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        out.finish("not-converged")
        return EXIT_NONCONV
    out.finish("ok" if code == EXIT_OK else "not-converged")
    return code


if __name__ == "__main__":
    sys.exit(main())
