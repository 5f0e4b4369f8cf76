"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N PASS|FAIL`` line; the lines are also
collected into a summary section at the end of the pytest run.
"""
import time

import mpmath
import numpy as np
import pytest

from jmgt import energy as en
from jmgt import suites
from jmgt.decay import regularity_loss_experiment, verify_appendix_inequalities
from jmgt.history import BandLimitedRandom, Grid, History, HistoryBuffer, StateField
from jmgt.medium import ExponentialKernel, MediumParams
from jmgt.modes import Stability, abscissa_sweep, no_memory_cubic, routh_hurwitz_no_memory
from jmgt.oracle import poly_roots

CRIT = MediumParams(tau=1.0, c=1.0, b=1.0)
SUB = MediumParams(tau=1.0, c=1.0, b=1.5)
KER = ExponentialKernel(m=0.5, tau_g=1.0)
RHO = np.logspace(-3, 3, 40)


@pytest.fixture
def report(request, capsys):
    def emit(num, ok, detail, elapsed, limit):
        ok = bool(ok and elapsed < limit)
        line = f"criterion {num} {'PASS' if ok else 'FAIL'}: {detail}; {elapsed:.2f}s (limit {limit:g}s)"
        request.config._acceptance_lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def _mp_residual(coeffs):
    """Roots polished to 40 digits, then ``max |p(lam)|`` evaluated at that precision."""
    with mpmath.workdps(40):
        cs = [mpmath.mpf(float(a)) for a in coeffs]
        roots = mpmath.polyroots(cs, maxsteps=200, extraprec=200)
        return max(float(abs(mpmath.polyval(cs, r))) for r in roots), roots


def test_criterion_1_stability_dichotomy(report):
    t0 = time.perf_counter()
    ok, worst_mp, worst_bw = True, 0.0, 0.0
    for params in (CRIT, SUB, MediumParams(1.0, 1.0, 0.5)):
        chk = suites.dichotomy_check(params, RHO)
        ok &= chk["agree"]
        worst_bw = max(worst_bw, chk["max_residual"])
        for r in RHO:
            res, roots = _mp_residual(no_memory_cubic(params, r * r))
            worst_mp = max(worst_mp, res)
            lead = max(float(mpmath.re(x)) for x in roots)
            expect = routh_hurwitz_no_memory(params, r * r)
            got = (Stability.STABLE if lead < -1e-20 else
                   Stability.UNSTABLE if lead > 1e-20 else Stability.MARGINAL)
            ok &= got == expect
    # exact pair at tau = c = rho = 1
    unit = poly_roots(no_memory_cubic(CRIT, 1.0)).value
    unit = unit[np.argsort(unit.imag)]
    ok_unit = np.allclose(unit, [-1j, -1.0, 1j], atol=1e-12)
    ok_unit &= routh_hurwitz_no_memory(CRIT, 1.0) == Stability.MARGINAL
    passed = ok and ok_unit and worst_mp <= 1e-10 and worst_bw <= 1e-10
    dt = time.perf_counter() - t0
    assert report(1, passed, f"classifications agree={ok}, {{-1,+-i}} exact={ok_unit}, "
                  f"max|p(lam)|={worst_mp:.1e} (polished), double backward error={worst_bw:.1e}", dt, 1.0)


def test_criterion_2_memory_stabilizes(report):
    t0 = time.perf_counter()
    curve = abscissa_sweep(CRIT, KER, RHO)
    a = np.asarray(curve.abscissa)
    dt = time.perf_counter() - t0
    assert report(2, np.all(a < 0), f"max abscissa over 40 frequencies = {a.max():.3e}", dt, 5.0)


def test_criterion_3_regularity_loss_scaling(report):
    t0 = time.perf_counter()
    c = suites.scaling_check(CRIT, KER)
    s = suites.scaling_check(SUB, KER)
    hi = s["abscissa"]
    const = [hi[1e2], hi[1e3]]
    ok = (c["high_spread"] <= 0.10 and c["low_spread"] <= 0.10 and s["high_constant_spread"] <= 0.05
          and max(const) < 0)
    dt = time.perf_counter() - t0
    assert report(3, ok, f"rho^2*abscissa={np.round(c['high_scaled'], 4).tolist()} "
                  f"abscissa/rho^2={np.round(c['low_scaled'], 4).tolist()} "
                  f"subcritical abscissa={np.round(const, 4).tolist()}", dt, 10.0)


def test_criterion_4_decay_exponents(report):
    t0 = time.perf_counter()
    out = suites.decay_suite(CRIT, KER, n=3, window=(1e2, 1e4), tol=0.05)
    dt = time.perf_counter() - t0
    fits = out["fits"]
    detail = ", ".join(f"{q}={f.exponent:.4f} (target {f.target:g})" for q, f in fits.items())
    assert report(4, out["pass"], detail, dt, 120.0)


def test_criterion_5_regularity_loss_decay(report):
    t0 = time.perf_counter()
    rl = regularity_loss_experiment(CRIT, KER, n=3)
    dt = time.perf_counter() - t0
    crit, sub = rl["critical"]["exponent"], rl["subcritical"]["exponent"]
    ok = crit >= -0.5 and abs(sub + 0.75) <= 0.05
    assert report(5, ok, f"critical={crit:.4f} (>= -0.5), subcritical={sub:.4f} (-0.75+-0.05)", dt, 120.0)


def test_criterion_6_representation_equivalence(report):
    t0 = time.perf_counter()
    r = suites.representation_check(CRIT, KER, N=256, L=40.0, dt=0.01, t_end=10.0)
    dt = time.perf_counter() - t0
    assert report(6, r["pass"], f"history vs reduced={r['history_vs_reduced']:.2e}, "
                  f"history vs convolution={r['history_vs_convolution']:.2e}", dt, 30.0)


def _random_history_state(seed, n=2, N=16, L=12.0, n_r=30, dr=0.25):
    g = Grid(n, N, L)
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31, size=3 + n_r)
    f = [BandLimitedRandom(1.0, 5, int(s), mean_free=False).sample(g) for s in seeds[:3]]
    eta = np.array([np.zeros_like(f[0])] +
                   [BandLimitedRandom(1.0, 5, int(s), mean_free=False).sample(g) for s in seeds[3:]])
    return StateField(g, *f, History(HistoryBuffer(f[0], n_r, dr, eta=eta)))


def test_criterion_7_energy_machinery(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        md = en.mode_data(_random_history_state(seed), CRIT, KER)
        for s in (1, 2, 3):
            tri, semi = en.triple_norm_sq(md, s), en.seminorm_sq(md, s)
            worst = max(worst,
                        abs(sum(en.E_bold(md, k) for k in range(s)) - tri) / tri,
                        abs(sum(en.D_bold(md, k) for k in range(s)) - semi) / semi)
    e = suites.energy_suite(CRIT, KER, kappas=(0, 1), tol_factor=10.0)
    res_ok = all(all(v["passed"].values()) for v in e["residuals"].values())
    slack = min(min(v["worst"].values()) for v in e["residuals"].values())
    ok = worst <= 1e-10 and res_ok and e["ratio_within"] and e["C1"] > 0
    dt = time.perf_counter() - t0
    assert report(7, ok, f"sum identities rel err={worst:.1e}, inequalities pass={res_ok} "
                  f"(min scaled slack {slack:.2f}), F/E in [{e['ratio_min']:.2f}, {e['ratio_max']:.1f}] "
                  f"within [C1, C2]=[{e['C1']:.2f}, {e['C2']:.0f}]", dt, 60.0)


def test_criterion_8_coefficient_chain(report):
    t0 = time.perf_counter()
    good = suites.coefficient_chain(CRIT, KER)
    bad = suites.coefficient_chain(CRIT, ExponentialKernel(m=0.0, tau_g=1.0))
    ok = good["selected"] and all(v > 0 for v in good["constants"].values()) and not bad["selected"]
    dt = time.perf_counter() - t0
    assert report(8, ok, f"m=0.5 selected={good['selected']} "
                  f"({len(good.get('constants', {}))} constants positive), m=0 selected={bad['selected']}",
                  dt, 1.0)


@pytest.mark.slow
def test_criterion_9_nonlinear_small_data(report):
    t0 = time.perf_counter()
    r = suites.nonlinear_global_run()
    dt = time.perf_counter() - t0
    fit = r["v_fit"]
    assert report(9, r["pass"], f"blow-up={r['failed']}, max triple ratio (t>=10)={r['triple_ratio_max']:.3f}, "
                  f"M non-increasing after t={r['M_plateau_time']}: {r['M_nonincreasing']}, "
                  f"v exponent={fit.exponent:.3f} (-0.75+-0.15)", dt, 600.0)


def test_criterion_10_appendix_suites(report):
    t0 = time.perf_counter()
    out = verify_appendix_inequalities()
    finite = all(np.isfinite(c["C"]) for k, v in out.items() if isinstance(v, dict)
                 for c in v["checks"] if "C" in c)
    st = out["strauss"]["checks"][0]
    ok = out["all_pass"] and finite and st["sup"] < 0.2
    dt = time.perf_counter() - t0
    assert report(10, ok, f"suites stable={out['all_pass']}, constants finite={finite}, "
                  f"Strauss sup={st['sup']:.4f} (< 0.2)", dt, 10.0)
