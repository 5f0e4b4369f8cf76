"""Decay experiments on the whole space via radial Fourier quadrature.

For radial data every frequency evolves independently by the 4x4 reduced
generator, so norms at any time are one-dimensional integrals in
``rho = |xi|``::

    ||grad^j U(t)||^2 = |S^{n-1}| int rho^(2j+n-1) |U_hat(rho, t)|^2 drho

with ``|U_hat|^2 = |p|^2 + rho^2 (|a|^2 + |v|^2)``. The integral uses
composite Gauss-Legendre panels (geometric in ``rho``), and each node is
propagated exactly through an eigen-decomposition of its diagonally
rescaled generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate as si
import scipy.linalg as sla
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma as gamma_fn

from .errors import ConfigurationError, FitError, ResolutionError
from .medium import ExponentialKernel, MediumParams
from .modes import reduced_generator


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in ``R^n``."""
    return 2 * math.pi ** (n / 2) / gamma_fn(n / 2)


@dataclass
class RadialProfile:
    """Radial spectral amplitude ``f(rho)`` shared by ``(psi0, psi1, psi2)``.

    ``kind="gaussian"``: ``rho^a exp(-rho^2 / 2)``.
    ``kind="sobolev"``: ``(1 + rho^2)^(-beta/2)``, cut off above ``rho_cut``.
    ``weights`` scales the three components (``eta_0 = psi0``).
    """

    kind: str = "gaussian"
    a: float = 0.0
    beta: float = 4.0
    rho_cut: float = 1e4
    weights: tuple = (1.0, 1.0, 1.0)
    n: int = 3

    def __post_init__(self):
        if self.kind not in ("gaussian", "sobolev"):
            raise ConfigurationError(f"unknown radial profile {self.kind!r}")
        if self.kind == "sobolev" and not self.beta > 0:
            raise ConfigurationError("beta must be positive")

    def amplitude(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind == "gaussian":
            return rho**self.a * np.exp(-rho**2 / 2)
        return (1 + rho**2) ** (-self.beta / 2) * (rho <= self.rho_cut)

    @property
    def rho_max(self) -> float:
        # Gaussian tail beyond 40 is below exp(-800)
        return 40.0 if self.kind == "gaussian" else float(self.rho_cut)

    @classmethod
    def sobolev_marginal(cls, s_data: float, n: int = 3, margin: float = 0.1, **kw) -> "RadialProfile":
        """Profile whose ``U_0`` lies in ``H^{s_data}`` with only ``margin`` to spare.

        ``U_0 ~ rho f`` at high frequency, so ``U_0 in H^s`` needs
        ``beta > s + n/2 + 1``.
        """
        return cls(kind="sobolev", beta=s_data + n / 2 + 1 + margin, n=n, **kw)

    def as_dict(self):
        return {"kind": self.kind, "a": self.a, "beta": self.beta, "rho_cut": self.rho_cut,
                "weights": list(self.weights), "n": self.n}


def radial_nodes(rho_max: float, panels: int = 600, order: int = 16, rho_min: float = 1e-5):
    """Composite Gauss-Legendre nodes on ``[0, rho_max]`` with geometric panels."""
    edges = np.concatenate([[0.0], np.geomspace(rho_min, rho_max, panels)])
    x, w = leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    return ((hi - lo) / 2 * x + (hi + lo) / 2).ravel(), ((hi - lo) / 2 * w).ravel()


class RadialEvolution:
    """Exact per-node evolution of a radial profile."""

    COND_MAX = 1e10

    def __init__(self, profile: RadialProfile, params: MediumParams, kernel: ExponentialKernel,
                 panels: int = 600, order: int = 16, rho_max: float | None = None):
        self.profile, self.params, self.kernel = profile, params, kernel
        self.rho, self.wq = radial_nodes(rho_max or profile.rho_max, panels, order)
        rho = self.rho
        A = reduced_generator(params, kernel, rho**2)
        # balance the generator: (rho^2 psi, rho v, w, rho z)
        S = np.stack([rho**2, rho, np.ones_like(rho), rho], -1)
        As = A * S[:, :, None] / S[:, None, :]
        self.S = S
        self.lam, self.V = np.linalg.eig(As)
        f = profile.amplitude(rho)
        w0, w1, w2 = profile.weights
        G = kernel.integral(params)
        x0 = np.stack([w0 * f, w1 * f, w2 * f, G * w0 * f], -1) * S
        self.x0 = x0
        self.coef = np.linalg.solve(self.V, x0[..., None].astype(complex))[..., 0]
        cond = np.linalg.cond(self.V)
        self.bad = np.flatnonzero(~np.isfinite(cond) | (cond > self.COND_MAX))
        self.As = As

    def state(self, t: float) -> np.ndarray:
        """Mode states ``(psi, v, w, z)`` at time ``t``, shape ``(4, nodes)``."""
        st = np.einsum("nij,nj->ni", self.V, self.coef * np.exp(self.lam * t)).real
        for i in self.bad:
            st[i] = sla.expm(t * self.As[i]) @ self.x0[i]
        return (st / self.S).T

    def norm(self, t: float, quantity: str = "U", j: int = 0) -> float:
        psi, v, w, _ = self.state(t)
        tau, rho, n = self.params.tau, self.rho, self.profile.n
        if quantity == "U":
            dens = (v + tau * w) ** 2 + rho**2 * ((psi + tau * v) ** 2 + v**2)
        elif quantity == "v":
            dens = v**2
        elif quantity == "w":
            dens = w**2
        elif quantity == "psi":
            dens = psi**2
        else:
            raise ConfigurationError(f"unknown quantity {quantity!r}")
        return math.sqrt(sphere_area(n) * np.sum(self.wq * rho ** (2 * j + n - 1) * dens))

    def series(self, times, quantity="U", j=0) -> np.ndarray:
        return np.array([self.norm(t, quantity, j) for t in times])


def radial_norm_evolution(profile: RadialProfile, params: MediumParams, kernel: ExponentialKernel,
                          j: int, times, quantity: str = "U", panels: int = 600,
                          check_tol: float | None = None) -> np.ndarray:
    """``||grad^j U(t)||`` (or of ``v``, ``w``) on ``R^n`` at the given times.

    With ``check_tol`` set, the run is repeated with twice the panels and a
    relative change above ``check_tol`` raises :class:`ResolutionError`.
    """
    series = RadialEvolution(profile, params, kernel, panels).series(times, quantity, j)
    if check_tol is not None:
        fine = RadialEvolution(profile, params, kernel, 2 * panels).series(times, quantity, j)
        rel = np.max(np.abs(fine - series) / np.maximum(np.abs(fine), 1e-300))
        if rel > check_tol:
            raise ResolutionError(f"radial quadrature not converged: panel doubling changed norms by {rel:.2e}")
    return series


# ---------------------------------------------------------------- fitting


@dataclass
class DecayFit:
    exponent: float
    r2: float
    window: tuple
    target: float | None = None
    tol: float = 0.05
    n_samples: int = 0
    r2_min: float = 0.999

    @property
    def pass_(self) -> bool:
        if self.target is None:
            return True
        return abs(self.exponent - self.target) <= self.tol

    @property
    def power_law(self) -> bool:
        return self.r2 >= self.r2_min

    def as_dict(self):
        return {"exponent": self.exponent, "r2": self.r2, "window": list(self.window),
                "target": self.target, "tol": self.tol, "pass": self.pass_,
                "power_law": self.power_law, "n_samples": self.n_samples}


def fit_decay(times, series, window=(1e2, 1e4), target=None, tol=0.05, min_samples=10,
              r2_min=0.999) -> DecayFit:
    """Least-squares slope of ``log y`` against ``log(1 + t)`` inside ``window``."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    sel = (t >= window[0] * (1 - 1e-12)) & (t <= window[1] * (1 + 1e-12))
    if sel.sum() < min_samples:
        raise FitError(f"only {int(sel.sum())} samples in window {window}; need {min_samples}")
    if np.any(~(y[sel] > 0)):
        raise FitError("series has non-positive values inside the fit window")
    X, Y = np.log1p(t[sel]), np.log(y[sel])
    slope, icpt = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icpt)
    ss = np.sum((Y - Y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return DecayFit(float(slope), float(min(max(r2, 0.0), 1.0)), tuple(window), target, tol,
                    int(sel.sum()), r2_min)


def log_times(window, samples=40):
    return np.geomspace(window[0], window[1], samples)


# ---------------------------------------------------------------- experiments


def _subcritical(params: MediumParams, factor=1.5) -> MediumParams:
    return params.with_(b=factor * params.tau * params.c**2)


def regularity_loss_experiment(params: MediumParams, kernel: ExponentialKernel, n: int = 3,
                               s_data: float = 0.0, window=(1e2, 1e4), samples: int = 40,
                               margin: float = 0.1, rho_cut: float = 1e4) -> dict:
    """Decay of ``||U||`` for data of limited smoothness, critical vs subcritical.

    The critical exponent for the marginal profile is expected to be
    visibly slower than ``-n/4`` while the subcritical comparison (same data,
    ``b = 1.5 tau c^2``) keeps ``-n/4``. A Gaussian critical run is included
    as the smooth-data reference.
    """
    times = log_times(window, samples)
    prof = RadialProfile.sobolev_marginal(s_data, n, margin, rho_cut=rho_cut)
    gauss = RadialProfile("gaussian", n=n)
    target = -n / 4
    crit = fit_decay(times, radial_norm_evolution(prof, params, kernel, 0, times), window, target)
    sub = fit_decay(times, radial_norm_evolution(prof, _subcritical(params), kernel, 0, times), window, target)
    smooth = fit_decay(times, radial_norm_evolution(gauss, params, kernel, 0, times), window, target)
    return {
        "profile": prof.as_dict(),
        "s_data": s_data,
        "critical": crit.as_dict(),
        "subcritical": sub.as_dict(),
        "critical_smooth": smooth.as_dict(),
        "degraded": crit.exponent > -0.5,
        "subcritical_ok": sub.pass_,
    }


def w_and_v_decay(profile: RadialProfile, params: MediumParams, kernel: ExponentialKernel, j: int = 0,
                  window=(1e2, 1e4), samples: int = 40, tol: float = 0.05):
    """Fits of ``||grad^j w||`` (target ``-n/4 - 1/2 - j/2``) and ``||grad^j v||`` (target ``-n/4 - j/2``)."""
    n = profile.n
    times = log_times(window, samples)
    ev = RadialEvolution(profile, params, kernel)
    fw = fit_decay(times, ev.series(times, "w", j), window, -n / 4 - 0.5 - j / 2, tol)
    fv = fit_decay(times, ev.series(times, "v", j), window, -n / 4 - j / 2, tol)
    return fw, fv


def decay_series_rows(times, named_series: dict):
    header = ["t"] + list(named_series)
    rows = [[float(t)] + [float(named_series[k][i]) for k in named_series] for i, t in enumerate(times)]
    return header, rows


# ---------------------------------------------------------------- inequality spot checks


def _sup_ratio(fn, t_max, n_t=60):
    ts = np.geomspace(1.0, t_max, n_t)
    return float(max(fn(t) for t in ts))


def _stable(c1, c2, rtol):
    return bool(np.isfinite(c1) and np.isfinite(c2) and abs(c2 - c1) <= rtol * abs(c2))


def _quad(f, a, b, points=None):
    val, _ = si.quad(f, a, b, limit=500, epsabs=0, epsrel=1e-11, points=points)
    return val


def check_convolution_power(a: float, b: float, t_max=1e4, rtol=1e-2) -> dict:
    """``sup_t (1+t)^min(a,b) int_0^t (1+t-s)^-a (1+s)^-b ds`` on two ranges."""
    if max(a, b) <= 1:
        raise ConfigurationError("the bound needs max(a, b) > 1")

    def ratio(t):
        f = lambda s: (1 + t - s) ** (-a) * (1 + s) ** (-b)  # noqa: E731
        mid = t / 2
        return (1 + t) ** min(a, b) * (_quad(f, 0, mid) + _quad(f, mid, t))

    c1, c2 = _sup_ratio(ratio, t_max), _sup_ratio(ratio, 2 * t_max)
    return {"a": a, "b": b, "C": c2, "C_half_range": c1, "stable": _stable(c1, c2, rtol)}


def check_exponential_power(gamma: float, beta: float, t_max=1e4, rtol=1e-2) -> dict:
    """``sup_t (1+t)^beta int_0^t exp(-gamma (t - s)) (1+s)^-beta ds``."""

    def ratio(t):
        f = lambda s: math.exp(-gamma * (t - s)) * (1 + s) ** (-beta)  # noqa: E731
        lo = max(0.0, t - 60.0 / gamma)
        head = _quad(f, 0, lo) if lo > 0 else 0.0
        return (1 + t) ** beta * (head + _quad(f, lo, t))

    c1, c2 = _sup_ratio(ratio, t_max), _sup_ratio(ratio, 2 * t_max)
    return {"gamma": gamma, "beta": beta, "C": c2, "C_half_range": c1, "stable": _stable(c1, c2, rtol)}


def check_gaussian_ball(n: int, t_max=1e4, rtol=1e-2) -> dict:
    """``sup_t (1+t)^(n/2) int_0^1 r^(n-1) exp(-r^2 t) dr``."""

    def ratio(t):
        f = lambda r: r ** (n - 1) * math.exp(-r * r * t)  # noqa: E731
        cut = min(1.0, 40.0 / math.sqrt(max(t, 1e-12)))
        return (1 + t) ** (n / 2) * _quad(f, 0, cut)

    c1, c2 = _sup_ratio(ratio, t_max), _sup_ratio(ratio, 2 * t_max)
    return {"n": n, "C": c2, "C_half_range": c1, "stable": _stable(c1, c2, rtol)}


def strauss_iteration(C1: float, C2: float, kappa: float, iters: int = 200) -> dict:
    """Iterate ``M <- C1 + C2 M^kappa`` from ``M = C1``.

    When ``C1 C2^(1/(kappa-1)) < (1 - 1/kappa) kappa^(-1/(kappa-1))`` the
    iterates increase to the smaller fixed point, below ``C1 / (1 - 1/kappa)``.
    """
    cond = C1 * C2 ** (1 / (kappa - 1)) < (1 - 1 / kappa) * kappa ** (-1 / (kappa - 1))
    bound = C1 / (1 - 1 / kappa)
    M = C1
    hist = [M]
    for _ in range(iters):
        M = C1 + C2 * M**kappa
        hist.append(M)
        if not math.isfinite(M) or M > 1e6:
            break
    sup = max(hist)
    return {"C1": C1, "C2": C2, "kappa": kappa, "condition": bool(cond), "bound": bound,
            "sup": sup, "limit": hist[-1], "below_bound": bool(sup < bound)}


def _periodic_field(rng, N, L, m_max):
    k = np.fft.rfftfreq(N, d=L / N) * L
    coef = (rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size)) * (k <= m_max) * (k > 0)
    return coef


def _deriv(coef, k, order, N):
    return np.fft.irfft((1j * k) ** order * coef, n=N)


def check_commutator(k_order: int = 2, pairs: int = 50, N: int = 128, L: float = 2 * math.pi,
                     m_max: int = 8, seed: int = 0, rtol=1e-2) -> dict:
    """Ratio ``||[d^k, f] g||_2 / (||f'||_inf ||d^(k-1) g||_2 + ||g||_inf ||d^k f||_2)``
    over random band-limited periodic pairs, at ``N`` and ``2N`` points."""

    def ratios(NN):
        rng = np.random.default_rng(seed)
        kk = 2 * np.pi * np.fft.rfftfreq(NN, d=L / NN)
        dx = L / NN
        out = []
        for _ in range(pairs):
            fc = _periodic_field(rng, N, L, m_max)
            gc = _periodic_field(rng, N, L, m_max)
            # pad to NN (same band-limited field)
            fcp = np.zeros(NN // 2 + 1, complex)
            gcp = np.zeros(NN // 2 + 1, complex)
            fcp[: fc.size] = fc * (NN / N)
            gcp[: gc.size] = gc * (NN / N)
            f, g = np.fft.irfft(fcp, n=NN), np.fft.irfft(gcp, n=NN)
            fg = np.fft.rfft(f * g)
            comm = _deriv(fg, kk, k_order, NN) - f * _deriv(gcp, kk, k_order, NN)
            l2 = lambda x: math.sqrt(np.sum(x**2) * dx)  # noqa: E731
            den = (np.max(np.abs(_deriv(fcp, kk, 1, NN))) * l2(_deriv(gcp, kk, k_order - 1, NN))
                   + np.max(np.abs(g)) * l2(_deriv(fcp, kk, k_order, NN)))
            out.append(l2(comm) / den)
        return float(max(out))

    c1, c2 = ratios(2 * N), ratios(4 * N)
    return {"k": k_order, "pairs": pairs, "C": c2, "C_coarse": c1, "stable": _stable(c1, c2, rtol)}


@dataclass
class AppendixSpec:
    conv_pairs: list = field(default_factory=lambda: [(2.0, 0.8), (1.5, 1.5), (0.5, 3.0)])
    exp_pairs: list = field(default_factory=lambda: [(1.0, 2.0), (0.5, 0.5)])
    dims: list = field(default_factory=lambda: [1, 3])
    strauss: tuple = (0.1, 1.0, 2.0)
    commutator_orders: list = field(default_factory=lambda: [1, 2, 3])
    t_max: float = 1e4


def verify_appendix_inequalities(spec: AppendixSpec | None = None) -> dict:
    """Five spot-check suites; each reports measured constants and a pass flag."""
    spec = spec or AppendixSpec()
    conv = [check_convolution_power(a, b, spec.t_max) for a, b in spec.conv_pairs]
    expo = [check_exponential_power(g, b, spec.t_max) for g, b in spec.exp_pairs]
    ball = [check_gaussian_ball(n, spec.t_max) for n in spec.dims]
    st = strauss_iteration(*spec.strauss)
    comm = [check_commutator(k) for k in spec.commutator_orders]
    suites = {
        "convolution_power": {"checks": conv, "pass": all(c["stable"] for c in conv)},
        "exponential_power": {"checks": expo, "pass": all(c["stable"] for c in expo)},
        "gaussian_ball": {"checks": ball, "pass": all(c["stable"] for c in ball)},
        "strauss": {"checks": [st], "pass": st["condition"] and st["below_bound"]},
        "commutator": {"checks": comm, "pass": all(c["stable"] for c in comm)},
    }
    suites["all_pass"] = all(v["pass"] for v in suites.values() if isinstance(v, dict))
    return suites
