"""Composite experiments shared by the command line and the test-suite."""
from __future__ import annotations

import math
import time

import numpy as np
import scipy.linalg as sla

from . import energy as en
from .decay import RadialProfile, fit_decay, log_times, radial_norm_evolution
from .errors import CoefficientSelectionError, ConfigurationError
from .history import (GaussianBump, Grid, InitialData, ReducedZ, StateField, Zero, init_state,
                      reduce_history)
from .medium import ExponentialKernel, MediumParams, MemoryKernel
from .modes import (Stability, abscissa_sweep, no_memory_cubic, reduced_generator,
                    routh_hurwitz_no_memory)
from .oracle import expm_eigen, fd_nonlinearity, poly_roots, richardson_memory_term
from .solver import SolverConfig, rhs_nonlinear, run

ROOT_TOL = 1e-10


def _rel(a, b):
    den = math.sqrt(sum(float(np.sum(np.asarray(x) ** 2)) for x in b))
    num = math.sqrt(sum(float(np.sum((np.asarray(x) - np.asarray(y)) ** 2)) for x, y in zip(a, b)))
    return num / den if den > 0 else num


# ---------------------------------------------------------------- symbol


def normalized_residual(coeffs, roots) -> float:
    """``max |p(lam)| / sum |a_i| |lam|^i``, the backward error of the roots.

    The raw ``|p(lam)|`` grows with the coefficient scale (``~rho^2``), so
    a fixed absolute threshold is unreachable in double precision at large
    ``rho``.
    """
    a = np.asarray(coeffs, dtype=float)
    lam = np.asarray(roots)
    pows = np.abs(lam)[:, None] ** np.arange(a.size - 1, -1, -1)
    num = np.abs(np.polyval(a, lam))
    return float(np.max(num / (pows @ np.abs(a))))


def dichotomy_check(params: MediumParams, rho_grid) -> dict:
    """Hurwitz classification against companion-matrix roots for the memoryless cubic."""
    rows, agree, worst = [], True, 0.0
    for r in rho_grid:
        cls = routh_hurwitz_no_memory(params, r * r)
        coeffs = no_memory_cubic(params, r * r)
        roots = poly_roots(coeffs)
        worst = max(worst, normalized_residual(coeffs, roots.value))
        lead = float(np.max(roots.value.real))
        scale = max(1.0, float(np.max(np.abs(roots.value))))
        if lead < -1e-9 * scale:
            direct = Stability.STABLE
        elif lead > 1e-9 * scale:
            direct = Stability.UNSTABLE
        else:
            direct = Stability.MARGINAL
        agree &= direct == cls
        rows.append({"rho": float(r), "hurwitz": cls.value, "roots": direct.value, "abscissa": lead})
    return {"agree": bool(agree), "max_residual": worst, "pass": bool(agree and worst <= ROOT_TOL),
            "rows": rows}


def scaling_check(params: MediumParams, kernel: MemoryKernel, hi=(1e2, 1e3), lo=(1e-2, 1e-3)) -> dict:
    """High-frequency ``abscissa * rho^2`` and low-frequency ``abscissa / rho^2`` pairs."""
    r = np.array(list(hi) + list(lo))
    a = np.linalg.eigvals(reduced_generator(params, kernel, r**2)).real.max(-1)
    h = a[:2] * r[:2] ** 2
    lw = a[2:] / r[2:] ** 2
    spread = lambda x: float(abs(x[0] - x[1]) / max(abs(x[0]), abs(x[1])))  # noqa: E731
    out = {"abscissa": dict(zip(map(float, r), map(float, a))),
           "high_scaled": h.tolist(), "low_scaled": lw.tolist(),
           "high_spread": spread(h), "low_spread": spread(lw),
           "high_constant_spread": spread(a[:2])}
    out["critical_scaling"] = bool(out["high_spread"] <= 0.10 and out["low_spread"] <= 0.10
                                   and np.all(a < 0))
    out["subcritical_constant"] = bool(out["high_constant_spread"] <= 0.05 and np.all(a[:2] < 0))
    return out


def symbol_summary(params: MediumParams, kernel: MemoryKernel, rho_grid) -> dict:
    """Classification string plus the data it rests on."""
    G = kernel.integral(params)
    curve = abscissa_sweep(params, kernel, rho_grid)
    absc = curve.abscissa
    all_neg = bool(np.all(np.isfinite(absc)) and np.all(absc < 0))
    delta = params.delta
    tol = 1e-12 * params.tau * params.c**2
    if G <= 0:
        if abs(delta) <= tol:
            text = "Marginal (undamped oscillatory modes)"
        elif delta > 0:
            text = "AsymptoticallyStable"
        else:
            text = "Unstable"
        scal = None
    else:
        scal = scaling_check(params, kernel)
        if abs(delta) <= tol:
            text = "Critical; stabilized by memory" if all_neg else "Critical; not stabilized"
            if all_neg and scal["critical_scaling"]:
                text += "; regularity-loss scaling confirmed"
        elif delta > 0:
            text = "AsymptoticallyStable" if all_neg else "Unstable"
        else:
            text = "Unstable"
    return {"summary": text, "curve": curve, "all_negative": all_neg,
            "lambda_low": curve.low_coef, "lambda_high": curve.high_coef, "scaling": scal}


# ---------------------------------------------------------------- oracles


def expm_check(params, kernel, rhos=(1e-2, 1.0, 10.0), t=1.0) -> dict:
    errs = []
    A = reduced_generator(params, kernel, np.asarray(rhos) ** 2)
    for Ai in A:
        ref = sla.expm(t * Ai)
        alt = expm_eigen(Ai, t).value
        errs.append(float(np.linalg.norm(ref - alt) / np.linalg.norm(ref)))
    return {"max_rel": max(errs), "pass": max(errs) <= 1e-8}


def nonlinearity_check(params: MediumParams, N=128, L=2 * math.pi) -> dict:
    """Spectral forcing against sixth-order differences on a smooth periodic field."""
    g = Grid(1, N, L)
    x = g.coords()[0]
    s = 2 * math.pi / L
    psi, v, w = np.sin(s * x), 0.5 * np.cos(2 * s * x), 0.2 * np.sin(3 * s * x + 0.3)
    st = StateField(g, psi, v, w, ReducedZ(np.zeros_like(psi)))
    spec = rhs_nonlinear(st, params, "def_F", dealias=False)
    fd = fd_nonlinearity(psi, v, w, g.dx, params.tau, params.k, "def_F", order=6)
    err = float(np.max(np.abs(spec - fd)) / max(np.max(np.abs(spec)), 1e-300))
    return {"max_rel": err, "pass": err <= 1e-6}


def representation_check(params: MediumParams, kernel: ExponentialKernel, N=256, L=40.0,
                         dt=0.01, t_end=10.0) -> dict:
    """Linear run in both memory representations, plus the history memory
    term against a direct convolution of the stored ``psi`` trajectory."""
    if params.k != 0:
        raise ConfigurationError("representation check is a linear (k = 0) experiment")
    g = Grid(1, N, L)
    data = InitialData(GaussianBump(1.0, 1.0), GaussianBump(0.5, 1.5), GaussianBump(-0.2, 1.0))
    cfg = SolverConfig(dt=dt, t_end=t_end, scheme="ExactLinear", snapshot_stride=1)
    a = run(init_state(g, data, kernel, params, "reduced"), cfg, params, kernel).final_state
    psis = []
    hook = lambda sp: psis.append(g.inverse(sp.psi)) or {}  # noqa: E731
    h = run(init_state(g, data, kernel, params, "history", dt=dt, r_max=25 * kernel.tau_g),
            cfg, params, kernel, diagnostics=hook).final_state
    rep = _rel([h.psi, h.v, h.w], [a.psi, a.v, a.w])
    psis = np.array(psis)
    gv = kernel.values(np.arange(psis.shape[0]) * dt, params)
    oracle = richardson_memory_term(psis, gv, dt, kernel.integral(params))
    mem = reduce_history(h, kernel, params)
    conv = _rel([mem], [oracle])
    return {"history_vs_reduced": rep, "history_vs_convolution": conv,
            "pass": bool(rep <= 1e-6 and conv <= 1e-6)}


def oracle_suite(params: MediumParams, kernel: ExponentialKernel, quick: bool = False) -> dict:
    lin = params.with_(k=0.0)
    out = {
        "dichotomy": dichotomy_check(lin, np.logspace(-3, 3, 40)),
        "expm": expm_check(lin, kernel),
        "nonlinearity": nonlinearity_check(params.with_(k=1.0)),
        "representation": representation_check(lin, kernel, t_end=2.0 if quick else 10.0),
    }
    out["dichotomy"].pop("rows")
    out["pass"] = all(v["pass"] for v in out.values())
    return out


# ---------------------------------------------------------------- energy


def energy_trajectory(params: MediumParams, kernel: MemoryKernel, coeffs=None, N=64, L=40.0,
                      dt=0.01, t_end=5.0, kappas=(0, 1)):
    """Linear critical history-representation run recording every energy scalar.

    The initial displacement is zero: a non-zero ``psi0`` puts a jump in the
    initial history, which adds a boundary term to the energy identities.
    """
    if coeffs is None:
        coeffs = en.select_lyapunov_coeffs(params, kernel)
    g = Grid(1, N, L)
    data = InitialData(Zero(), GaussianBump(0.5, 2.0), GaussianBump(-0.2, 2.0))
    cfg = SolverConfig(dt=dt, t_end=t_end, scheme="ExactLinear", snapshot_stride=1)
    init = init_state(g, data, kernel, params, "history", dt=dt)
    hook = en.diagnostics_hook(params, kernel, kappas=kappas, coeffs=coeffs)
    return run(init, cfg, params, kernel, diagnostics=hook), coeffs, g


def energy_suite(params: MediumParams, kernel: MemoryKernel, kappas=(0, 1), coeffs=None,
                 tol_factor=10.0, **kw) -> dict:
    lin = params.with_(k=0.0)
    traj, coeffs, g = energy_trajectory(lin, kernel, coeffs, kappas=kappas, **kw)
    res = {}
    ok = True
    for k in kappas:
        rep = en.energy_residuals(traj, k, lin, tol_factor)
        res[f"kappa_{k}"] = {"passed": rep.passed(), "worst": rep.worst()}
        ok &= all(rep.passed().values())
    C1, C2 = en.equivalence_bounds(lin, kernel, coeffs, g.ksq.ravel())
    ratio = traj.column("lyap_0") / traj.column("Ebold_0")
    within = bool(np.all(ratio >= C1 * (1 - 1e-9)) and np.all(ratio <= C2 * (1 + 1e-9)))
    return {"residuals": res, "C1": C1, "C2": C2, "ratio_min": float(ratio.min()),
            "ratio_max": float(ratio.max()), "ratio_within": within,
            "coefficients": coeffs.as_dict(), "pass": bool(ok and within and C1 > 0)}


def coefficient_chain(params: MediumParams, kernel: MemoryKernel) -> dict:
    try:
        c = en.select_lyapunov_coeffs(params, kernel)
        return {"selected": True, "constants": {k: c.constants[k] for k in en.POSITIVE}}
    except CoefficientSelectionError as exc:
        return {"selected": False, "reason": str(exc)}


# ---------------------------------------------------------------- decay


def decay_targets(n: int) -> dict:
    return {"U0": -n / 4, "U1": -n / 4 - 0.5, "v0": -n / 4, "w0": -n / 4 - 0.5}


def decay_suite(params: MediumParams, kernel: ExponentialKernel, n=3, quantities=("U0", "U1", "v0", "w0"),
                window=(1e2, 1e4), samples=40, tol=0.05, r2_min=0.999, w_tau=0.1,
                grad_window=(1e3, 1e4)) -> dict:
    """Exponent fits for Gaussian data on ``R^n``.

    ``w`` is fitted at ``tau = w_tau`` (critical ``b = tau c^2`` kept); the
    ``grad U`` fit uses ``grad_window`` since its transient lasts longer.
    """
    prof = RadialProfile("gaussian", n=n)
    targets = decay_targets(n)
    fits, series = {}, {}
    for q in quantities:
        name, j = q[:-1], int(q[-1])
        p = params
        if name == "w" and w_tau is not None:
            p = params.with_(tau=w_tau, b=w_tau * params.c**2 + params.delta)
        win = grad_window if (name == "U" and j >= 1 and grad_window) else window
        t = log_times(win, samples)
        y = radial_norm_evolution(prof, p, kernel, j, t, name)
        tgt = targets.get(q, -n / 4 - j / 2 - (0.5 if name == "w" else 0.0))
        fits[q] = fit_decay(t, y, win, tgt, tol, r2_min=r2_min)
        series[q] = (t, y)
    return {"fits": fits, "series": series,
            "pass": all(f.pass_ for f in fits.values()),
            "power_law": all(f.power_law for f in fits.values())}


# ---------------------------------------------------------------- nonlinear global run


def nonlinear_global_run(params: MediumParams | None = None, kernel: ExponentialKernel | None = None,
                         N=32, L=48.0, width=2.0, scale=1e-3, dt=0.05, t_end=200.0, s=4,
                         workers=None) -> dict:
    """Small-data 3D nonlinear run with the weighted-norm diagnostics.

    The ``v`` decay fit uses the window ``[L/8, L/2]``: late enough for the
    Gaussian to have spread, early enough that the wave front has not
    wrapped around the torus (unit speed).
    """
    params = params or MediumParams(tau=1.0, c=1.0, b=1.0, k=1.0)
    kernel = kernel or ExponentialKernel(m=0.5, tau_g=1.0)
    g = Grid(3, N, L, workers)
    bump = GaussianBump(1.0, width)
    data = InitialData(bump, bump, bump, scale=scale)
    stride = max(1, int(round(1.0 / dt)))
    cfg = SolverConfig(dt=dt, t_end=t_end, scheme="ETD4", snapshot_stride=stride,
                       history_stride=max(1, int(round(0.2 / dt))), history_r_max=25 * kernel.tau_g,
                       workers=workers)
    t0 = time.perf_counter()
    traj = run(init_state(g, data, kernel, params, "reduced"), cfg, params, kernel,
               diagnostics=en.diagnostics_hook(params, kernel, s=s, mean_free=True, linf=True))
    elapsed = time.perf_counter() - t0
    t = np.array(traj.times)
    tri = np.sqrt(traj.column("triple"))
    late = t >= 10
    ratio = float(np.max(tri[late]) / tri[0]) if late.any() else float("nan")
    wn = en.weighted_norms(traj, s, 3)
    M = wn.M_cal
    plateau = _first_plateau(t, M)
    after = M[plateau:] if plateau is not None else np.array([])
    m_ok = bool(plateau is not None and np.all(np.diff(after) <= 1e-12 * after[0]))
    win = (L / 8, L / 2)
    fit = fit_decay(t, traj.column("v_l2_0"), win, -0.75, 0.15, min_samples=5)
    return {
        "failed": traj.failed, "failure": traj.failure, "elapsed": elapsed,
        "triple_ratio_max": ratio, "M_plateau_time": None if plateau is None else float(t[plateau]),
        "M_nonincreasing": m_ok, "v_fit": fit, "trajectory": traj, "weighted": wn,
        "pass": bool(not traj.failed and ratio <= 1.01 and m_ok and fit.pass_),
    }


def _first_plateau(t, M, span=5.0, rtol=1e-6):
    """First index after which ``M`` stays flat (relative ``rtol``) for ``span`` time units."""
    for i in range(len(t)):
        j = np.searchsorted(t, t[i] + span)
        if j >= len(t):
            return None
        if M[j] <= M[i] * (1 + rtol):
            return i
    return None
