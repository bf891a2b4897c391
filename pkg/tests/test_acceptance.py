"""Acceptance suite: the ten desk-scale criteria at their stated tolerances.

Each ``test_criterion_NN`` checks every clause of one criterion and records the
measured numbers; the terminal summary prints one PASS/FAIL line per criterion.
The full module takes roughly ten minutes on one core.
"""
from pathlib import Path

import numpy as np
import pytest

from kgscatter import asymptotics as A
from kgscatter import cli, dynamics as D, fileio, graf
from kgscatter import grid as G
from kgscatter import kgwave as K
from kgscatter import propest as P
from kgscatter import specops as S
from kgscatter.detectors import Cutoff, ProductCutoff

pytestmark = pytest.mark.slow

SCEN = Path(__file__).resolve().parents[1] / "scenarios"
TAIL_LIMIT = 0.05

# reference configuration: resolved box for the sigma = 0.5 Gaussian, heavy slow outgoing packets
REF_GRID = dict(d=1, n=512, L=110.0)
REF_MASS = 20.0
REF_PACKET = dict(p_center=2.74, p_width=1.34, x0=5.0, sharpness=4)
REF_CUT = ProductCutoff(Cutoff(0.16, 0.14, 0.155), Cutoff(-0.16, 0.14, 0.155))
GAUSS = D.GaussianPotential(0.2, 0.5)


def reference_state():
    g = G.make_grid(**REF_GRID)
    pc, pw, x0, a = REF_PACKET["p_center"], REF_PACKET["p_width"], REF_PACKET["x0"], REF_PACKET["sharpness"]
    p1 = K.make_packet(g, REF_MASS, pc, pw, x0=x0, sharpness=a)
    p2 = K.make_packet(g, REF_MASS, -pc, pw, x0=-x0, sharpness=a)
    assert K.velocity_support(p1).speed_max <= 0.8
    return K.product_state(p1.initial, p2.initial)


def reference_run(source):
    cfg = D.EvolutionConfig(T=400.0, dt=0.25, n_log=64, extra_times=(100.0, 200.0))
    return D.run(reference_state(), source, cfg, REF_MASS)


@pytest.fixture(scope="module")
def free_run():
    return reference_run(D.SourceModel.none())


@pytest.fixture(scope="module")
def gauss_run():
    return reference_run(D.SourceModel.pair(GAUSS))


def inside_k_packets():
    """Free pair whose whole velocity support lies inside the reference K."""
    g = G.make_grid(1, 1024, 440.0)
    return g, K.make_packet(g, 1.5, 2.04, 0.28, sharpness=4), K.make_packet(g, 1.5, -2.04, 0.28, sharpness=4)


@pytest.fixture(scope="module")
def reference_graf():
    Kr = graf.reference_K()
    return Kr, graf.build(graf.choose_params(Kr), resolution=4)


def test_criterion_01_spectral_core(criterion):
    rng = np.random.default_rng(2024)
    worst_parseval, worst_roundtrip = 0.0, 0.0
    for n in (256, 512):
        g = G.make_grid(1, n, 110.0)
        F = G.ComplexField2P(g, rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
        nrm = G.l2_norm(F)
        fh = G.fourier_forward(F)
        worst_parseval = max(worst_parseval, abs(G.momentum_norm(g, fh, 2) - nrm) / nrm)
        worst_roundtrip = max(worst_roundtrip, G.l2_norm(G.fourier_inverse(g, fh, 2) - F) / nrm)

    # same spacing as the reference box, so the reference momenta are resolved
    g = G.make_grid(1, 256, 55.0)
    F = reference_state_on(g)
    prop = S.free_propagator(S.omega_tilde_multiplier(g, REF_MASS), 0.04)
    n0 = G.l2_norm(F)
    u = F
    for _ in range(10_000):
        u = prop(u)
    drift = abs(G.l2_norm(u) - n0) / n0

    speed = 0.0
    for n in (256, 512):
        for m in (REF_MASS, 1.0, 1e-3):
            gg = G.make_grid(1, n, 110.0)
            speed = max(speed, max(float(np.max(np.abs(c))) for c in S.grad_omega_arrays(gg, m, 2)))

    ok = worst_parseval < 1e-12 and worst_roundtrip < 1e-12 and drift < 1e-12 and speed < 1.0
    criterion(f"parseval {worst_parseval:.2e}, round trip {worst_roundtrip:.2e}, "
              f"norm drift after 1e4 steps {drift:.2e}, max |grad w| {speed:.12f}")
    assert ok


def reference_state_on(g):
    p1 = K.make_packet(g, REF_MASS, 2.74, 1.34, x0=5.0, sharpness=4)
    p2 = K.make_packet(g, REF_MASS, -2.74, 1.34, x0=-5.0, sharpness=4)
    return K.product_state(p1.initial, p2.initial)


def test_criterion_02_velocity_localisation(criterion):
    g = G.make_grid(1, 16384, 800.0)
    pk = K.make_packet(g, 1.0, 1.0, 0.2)
    vs = K.velocity_support(pk)
    h = Cutoff.around(float(0.5 * (vs.lo[0] + vs.hi[0])), 0.5)
    assert h.covers(vs.lo, vs.hi)
    times = np.geomspace(10.0, 200.0, 12)
    s = K.check_prop_toto20_1(pk, h, times)
    slope = s.fitted_slope(t_min=20.0, t_max=200.0)
    ok = s.values[-1] < 1e-2 and slope < 0 and s.values[-1] < s.values[0]
    criterion(f"residual at t=200 {s.values[-1]:.3e} (< 1e-2), trend slope {slope:.2f}")
    assert ok


def test_criterion_03_separated_velocity_decay(criterion):
    g = G.make_grid(1, 32768, 1400.0)
    pk = K.make_packet(g, 2.0, 2.0, 0.8)
    chi2 = Cutoff(0.8, 0.0, 0.3)
    chi1 = Cutoff(-0.2, 0.45, 0.5)
    s = K.check_prop_toto20_2(pk, chi1, chi2, np.geomspace(50.0, 500.0, 16))
    gap = s.meta["support_gap"]
    slope = s.fitted_slope(t_min=50.0, t_max=500.0)
    ok = abs(gap - 0.2) < 1e-12 and slope <= -4.0
    criterion(f"support gap {gap:.3f}, fitted exponent over [50, 500] {slope:.2f} (<= -4)")
    assert ok


def test_criterion_04_graf_construction(criterion, reference_graf):
    Kr, gf = reference_graf
    rep = graf.hessian_check(gf, Kr, rel_tol=1e-6)
    fine = graf.build(gf.params, resolution=8)
    rep2 = graf.hessian_check(fine, Kr, rel_tol=1e-6, fd_crosscheck=False)
    change = abs(rep2["c1"] - rep["c1"]) / rep["c1"]
    machine = 1e-12 * rep["R_peak"]
    ok = (rep["R_max_on_half_tube"] <= machine and rep["R_max_outside_Crp"] <= machine
          and rep["c1"] > 0 and rep["convex_fraction_Cr"] >= 0.999 and change < 0.05)
    criterion(f"c1 {rep['c1']:.6f} -> {rep2['c1']:.6f} under refinement ({change:.1e}), convex fraction "
              f"{rep['convex_fraction_Cr']:.4f}, |R| on D_eps/2 {rep['R_max_on_half_tube']:.1e}, "
              f"outside C_r'+eps' {rep['R_max_outside_Crp']:.1e} (peak {rep['R_peak']:.0f})")
    assert ok


def test_criterion_05_large_velocity(criterion, free_run, gauss_run):
    tails = {}
    for label, tr in (("free", free_run), ("gaussian", gauss_run)):
        s = P.large_velocity_series(tr, 1.6, 3.0, 0.3)
        tails[label] = s.tail_fraction()
    ok = all(v < TAIL_LIMIT for v in tails.values())
    criterion(", ".join(f"{k} tail fraction {v:.2e}" for k, v in tails.items()) + " (< 0.05)")
    assert ok


def test_criterion_06_phase_space(criterion, free_run, gauss_run):
    Kr = graf.reference_K()
    tails = {}
    for label, tr in (("free", free_run), ("gaussian", gauss_run)):
        tails[label] = P.phase_space_series(tr, Kr).tail_fraction()

    # free integrand slope with the whole velocity support inside int K (shrunk by the smoothing layer)
    g, p1, p2 = inside_k_packets()
    vs = K.velocity_support(p1)
    v_lo, v_hi = float(vs.lo[0]), float(vs.hi[0])
    inside = np.sqrt(2) * v_lo >= Kr.r_in + 0.05 and np.sqrt(2) * v_hi <= Kr.r_out - 0.05
    assert K.reach(p1, 400.0, 1e-6) < 0.95 * g.L
    F = K.product_state(p1.initial, p2.initial)
    s = P.free_phase_space_series(F, Kr, 1.5, np.geomspace(1.0, 400.0, 48))
    slope = s.fitted_slope(t_min=40.0, t_max=400.0)

    ok = all(v < TAIL_LIMIT for v in tails.values()) and inside and -2.5 <= slope <= -1.5
    criterion(", ".join(f"{k} tail fraction {v:.2e}" for k, v in tails.items())
              + f"; free slope {slope:.2f} in [-2.5, -1.5] with speeds [{v_lo:.3f}, {v_hi:.3f}]")
    assert ok


def graf_bookkeeping(tr, Kr, gf, c1):
    M = P.graf_observable(gf)
    Ks = P.PositionFactor(lambda y: Kr.smooth(y), Kr.diagonal_clearance())

    def B(ops, t, u):
        chi = P._scaled(Ks.fn, ops, t)
        return c1 / t * P.phase_space_terms(ops, t, u, chi)[0]

    return P.monitor_A1(M, tr, B)


def test_criterion_07_bookkeeping_monitors(criterion, free_run, gauss_run, reference_graf):
    Kr, gf = reference_graf
    c1 = graf.hessian_check(gf, Kr, fd_crosscheck=False)["c1"]
    parts, ok = [], True
    for label, tr in (("free", free_run), ("gaussian", gauss_run)):
        rep = graf_bookkeeping(tr, Kr, gf, c1)
        a3 = P.monitor_A3(P.relative_velocity_observable(Kr), tr)
        small = abs(a3["limit_estimate"]) < 1e-2 * a3["norm2"]
        ok = ok and rep["closes"] and small
        parts.append(f"{label}: A1 closure/estimate {rep['closure_ratio']:.2f} (<= 10), "
                     f"A3 limit {a3['limit_estimate']:.1e}")

    # the reference packets never enter K, so A3 is also run on a pair that crosses it
    _, p1, p2 = inside_k_packets()
    F = K.product_state(p1.initial, p2.initial)
    tr = D.run(F, D.SourceModel.none(), D.EvolutionConfig(T=400.0, dt=0.25, n_log=64), 1.5)
    a3 = P.monitor_A3(P.relative_velocity_observable(Kr), tr)
    peak = max(a3["series"]["Q"])
    ok = ok and abs(a3["limit_estimate"]) < 1e-2 * a3["norm2"] and peak > 1e-1 * a3["norm2"]
    parts.append(f"inside K: A3 peak {peak:.2f}, limit {a3['limit_estimate']:.1e}")
    criterion("; ".join(parts))
    assert ok


def test_criterion_08_intermediate_limit(criterion, free_run, gauss_run):
    orc = A.oracle_for(free_run, REF_CUT)
    on = G.l2_norm(orc)
    resid = []
    for T in (100.0, 200.0, 400.0):
        G_T = G.ComplexField2P(free_run.grid, A.limit_vector(free_run, REF_CUT, T))
        resid.append(G.l2_norm(G_T - orc) / on)
    sourced = A.intermediate_limit(gauss_run, REF_CUT, tol=1e-2)
    ok = resid[-1] < 1e-3 and resid[0] > resid[1] > resid[2] and sourced.converged
    criterion(f"free oracle residual at T=100/200/400: {resid[0]:.2e}/{resid[1]:.2e}/{resid[2]:.2e}; "
              f"sourced last relative Cauchy step {sourced.relative_tail[-1]:.2e} (< 1e-2)")
    assert ok


def completeness_run(coupling):
    g = G.make_grid(**REF_GRID)
    p1 = K.make_packet(g, REF_MASS, 3.2, 0.8, x0=-15.0, sharpness=4)
    p2 = K.make_packet(g, REF_MASS, -3.2, 0.8, x0=15.0, sharpness=4)
    F = K.product_state(p1.initial, p2.initial)
    cfg = D.EvolutionConfig(T=400.0, dt=0.25, n_log=24, record_cook=True)
    return D.run(F, D.SourceModel.pair(D.GaussianPotential(coupling, 0.5)), cfg, REF_MASS)


def test_criterion_09_completeness(criterion):
    defects, residual = {}, None
    for lam in (0.4, 0.2, 0.1):
        tr = completeness_run(lam)
        ck = A.cook_wave_adjoint(tr)
        defects[lam] = ck.isometry_defect
        if lam == 0.2:
            residual = A.completeness_report(tr, REF_CUT, cook=ck)["residual"]
        del tr
    monotone = defects[0.4] > defects[0.2] > defects[0.1]
    ok = defects[0.2] < 1e-2 and residual < 3e-2 and monotone
    criterion(f"isometry defect at lambda 0.4/0.2/0.1: {defects[0.4]:.1e}/{defects[0.2]:.1e}/{defects[0.1]:.1e}; "
              f"residual at 0.2 {residual:.1e} (< 3e-2)")
    assert ok


def richardson_ratios(run, dts):
    u = [run(dt) for dt in dts]
    err = [np.linalg.norm(u[k] - u[k + 1]) for k in range(len(u) - 1)]
    return [err[k] / err[k + 1] for k in range(len(err) - 1)]


def test_criterion_10_determinism_and_order(criterion, tmp_path):
    scen = str(SCEN / "minimal_free.yaml")
    assert cli.main(["simulate", "--scenario", scen, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["simulate", "--scenario", str(tmp_path / "a" / "manifest.json"),
                     "--out", str(tmp_path / "b")]) == 0
    ma = fileio.read_json(tmp_path / "a" / "manifest.json")
    mb = fileio.read_json(tmp_path / "b" / "manifest.json")
    same = (ma["checksums"] == mb["checksums"]
            and {k: v["sha256"] for k, v in ma["outputs"].items()} == {k: v["sha256"] for k, v in mb["outputs"].items()})

    g = G.make_grid(1, 256, 40.0)
    p1 = K.make_packet(g, 20.0, 3.0, 1.0, x0=-1.0, sharpness=4)
    p2 = K.make_packet(g, 20.0, -3.0, 1.0, x0=1.0, sharpness=4)
    F = K.product_state(p1.initial, p2.initial)
    pair = D.SourceModel.pair(GAUSS)

    def strang(dt):
        return D.run(F, pair, D.EvolutionConfig(T=3.0, dt=dt, n_log=0), 20.0).final.values

    X1, X2 = g.x_axes(2)
    phi = np.exp(-(X1 - 2) ** 2 / 4 - (X2 + 2) ** 2 / 4) * np.exp(1j * (2 * X1 - 2 * X2))
    tab = D.SourceModel.tabulated(lambda t, grid: np.exp(-1.3j * t) * phi * (1 + 0.5 * np.sin(t)))

    def duhamel(dt):
        cfg = D.EvolutionConfig(T=3.0, dt=dt, n_log=0, scheme="duhamel_midpoint")
        return D.run(F, tab, cfg, 1.0).final.values

    rs = richardson_ratios(strang, [0.2 / 2 ** k for k in range(4)])
    rd = richardson_ratios(duhamel, [0.1 / 2 ** k for k in range(4)])
    ok = same and all(3.5 <= r <= 4.5 for r in rs + rd)
    criterion(f"manifest rerun bit-identical: {same}; Richardson ratios strang "
              f"{', '.join(f'{r:.3f}' for r in rs)}, duhamel {', '.join(f'{r:.3f}' for r in rd)}")
    assert ok
