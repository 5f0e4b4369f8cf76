"""Norms, energies and auxiliary functionals evaluated spectrally.

Notation used throughout: ``a = psi + tau v``, ``p = v + tau w``,
``G = int g``, ``delta' = b - tau c_g^2``. All L2 quantities use Parseval on
the half spectrum, so ``||grad^q f||^2 = sum |xi|^(2q) |f_hat|^2`` (times the
Parseval weight). Age integrals over ``eta`` use the jump-aware split
quadrature of :mod:`jmgt.history`.

Two independent code paths compute the high-order norms: the per-order
energies ``E_bold``/``D_bold`` sum their individual terms, while
``triple_norm_sq``/``seminorm_sq`` use collapsed spectral multipliers. The
tests compare them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (CoefficientSelectionError, ConfigurationError, RegularityIndexError,
                     ResolutionError, UnsupportedRepresentationError)
from .history import StateField, kernel_weight_values, split_weights
from .medium import ExponentialKernel, MediumParams, MemoryKernel, validate_assumptions
from .solver import SpectralState, _nonlinear_hat


# ---------------------------------------------------------------- mode data


@dataclass
class ModeData:
    """Per-mode arrays needed by every functional."""

    r2: np.ndarray
    w8: np.ndarray
    psi: np.ndarray
    v: np.ndarray
    w: np.ndarray
    a: np.ndarray
    p: np.ndarray
    tau: float
    Ig: np.ndarray | None = None      # int g |eta|^2
    Igp: np.ndarray | None = None     # int -g' |eta|^2
    Igpp: np.ndarray | None = None    # int g'' |eta|^2
    Zg: np.ndarray | None = None      # int g eta
    F: np.ndarray | None = None       # forcing of the tau w_t equation

    @property
    def has_eta(self):
        return self.Ig is not None

    def _pow(self, q):
        return self.w8 * (self.r2**q if q else 1.0)

    def sq(self, X, q=0) -> float:
        return float(np.sum(self._pow(q) * np.abs(X) ** 2))

    def cross(self, X, Y, q=0) -> float:
        return float(np.sum(self._pow(q) * (X * np.conj(Y)).real))

    def eta(self, which: str, q=0) -> float:
        arr = {"g": self.Ig, "-g'": self.Igp, "g''": self.Igpp}[which]
        if arr is None:
            raise UnsupportedRepresentationError("this quantity needs the history variable eta")
        return float(np.sum(self._pow(q) * arr))

    def eta_v(self, q=0) -> float:
        """``int int g grad^q eta . grad^q v``."""
        if self.Zg is None:
            raise UnsupportedRepresentationError("this quantity needs the history variable eta")
        return self.cross(self.Zg, self.v, q)

    def forcing_dot(self, X, q=0) -> float:
        if self.F is None:
            return 0.0
        return self.cross(self.F, X, q)


def mode_data(state, params: MediumParams, kernel: MemoryKernel, mean_free: bool = False,
              forcing: str | None = "off") -> ModeData:
    """Collect per-mode arrays from a :class:`StateField` or :class:`SpectralState`.

    ``forcing``: ``"off"`` for linear runs, otherwise the nonlinearity form
    (``"def_F"`` or ``"main_system"``) used to evaluate ``F = tau * N``.
    """
    sp = state if isinstance(state, SpectralState) else SpectralState.from_state(state)
    g = sp.grid
    w8 = np.array(g.parseval, dtype=float)
    if mean_free:
        w8 = w8 * (g.ksq > 0)
    tau = params.tau
    md = ModeData(g.ksq, w8, sp.psi, sp.v, sp.w, sp.psi + tau * sp.v, sp.v + tau * sp.w, tau)
    if sp.eta is not None:
        buf = sp.eta
        eta = buf.eta_all()
        mag = np.abs(eta) ** 2
        for which, attr in (("g", "Ig"), ("-g'", "Igp"), ("g''", "Igpp")):
            vals, tail = kernel_weight_values(kernel, params, buf.r, which)
            c = split_weights(buf.n_r, buf.dr, vals, buf.front, tail)
            setattr(md, attr, np.tensordot(c, mag, axes=(0, 0)))
            if which == "g":
                md.Zg = np.tensordot(c, eta, axes=(0, 0))
    if forcing not in (None, "off"):
        md.F = tau * _nonlinear_hat(g, sp.psi, sp.v, sp.w, params, forcing, dealias=True)
    return md


def _constants(params: MediumParams, kernel: MemoryKernel):
    G = kernel.integral(params)
    cg2 = params.c**2 - G
    return cg2, G, params.b - params.tau * cg2


# ---------------------------------------------------------------- norms


def _S(r2, lo, hi):
    """``sum_{i=lo}^{hi} r2^i`` (zero when hi < lo)."""
    out = np.zeros_like(r2)
    for i in range(lo, hi + 1):
        out = out + r2**i
    return out


def triple_norm_sq(md: ModeData, s: int, shift: int = 0) -> float:
    """``|||grad^shift Psi|||^2_{H^s}`` as the sum over orders ``0..s-1`` of the
    per-order energy (collapsed multipliers)."""
    r2 = md.r2
    sh = r2**shift if shift else 1.0
    A = _S(r2, 1, s) + _S(r2, 2, s + 1) + _S(r2, 3, s + 2)
    P = _S(r2, 0, s - 1) + _S(r2, 1, s) + _S(r2, 2, s + 1)
    W = _S(r2, 0, s - 1)
    out = np.sum(md.w8 * sh * (A * (np.abs(md.a) ** 2 + np.abs(md.v) ** 2)
                                + P * np.abs(md.p) ** 2 + W * np.abs(md.w) ** 2))
    if md.has_eta:
        out += np.sum(md.w8 * sh * A * md.Igp)
    return float(out)


def seminorm_sq(md: ModeData, s: int, shift: int = 0) -> float:
    """``|grad^shift Psi|^2_{H^s}`` as the sum over orders of the dissipative energy."""
    r2 = md.r2
    sh = r2**shift if shift else 1.0
    out = np.sum(md.w8 * sh * (_S(r2, 2, s + 1) * np.abs(md.a) ** 2
                               + _S(r2, 1, s) * np.abs(md.p) ** 2
                               + (_S(r2, 1, s) + _S(r2, 2, s + 1)) * np.abs(md.v) ** 2
                               + _S(r2, 0, s - 1) * np.abs(md.w) ** 2))
    if md.has_eta:
        out += np.sum(md.w8 * sh * (_S(r2, 1, s) + 2 * _S(r2, 2, s + 1) + 2 * _S(r2, 3, s + 2)) * md.Igp)
    return float(out)


def literal_triple_norm_sq(md: ModeData, s: int) -> float:
    """The same list of terms read with standard ``H^m = sum_{i<=m} ||grad^i||^2`` norms."""
    r2 = md.r2
    H = lambda m: _S(r2, 0, m)  # noqa: E731
    out = np.sum(md.w8 * ((r2**2 * H(s) + r2 * H(s - 1)) * np.abs(md.a) ** 2
                          + (H(s - 1) + r2 * H(s)) * np.abs(md.p) ** 2
                          + (r2**2 * H(s) + r2 * H(s - 1)) * np.abs(md.v) ** 2
                          + H(s - 1) * np.abs(md.w) ** 2))
    if md.has_eta:
        out += np.sum(md.w8 * (r2 * H(s - 1) + r2**2 * H(s)) * md.Igp)
    return float(out)


def literal_seminorm_sq(md: ModeData, s: int) -> float:
    r2 = md.r2
    H = lambda m: _S(r2, 0, m)  # noqa: E731
    out = np.sum(md.w8 * (r2**2 * H(s - 1) * np.abs(md.a) ** 2
                          + (r2**2 + r2) * H(s - 1) * np.abs(md.v) ** 2
                          + r2 * H(s - 1) * np.abs(md.p) ** 2
                          + H(s - 1) * np.abs(md.w) ** 2))
    if md.has_eta:
        out += np.sum(md.w8 * (r2 * H(s - 1) + r2**2 * H(s)) * md.Igp)
    return float(out)


def E_bold(md: ModeData, kappa: int) -> float:
    """Energy of order ``kappa``, term by term (``H^1`` norms expanded)."""
    k = kappa
    h1 = lambda X, q: md.sq(X, q) + md.sq(X, q + 1)  # noqa: E731
    out = (md.sq(md.a, k + 1) + md.sq(md.p, k) + md.sq(md.v, k + 1)
           + h1(md.a, k + 2) + h1(md.p, k + 1) + h1(md.v, k + 2) + md.sq(md.w, k))
    if md.has_eta:
        out += md.eta("-g'", k + 1) + md.eta("-g'", k + 2) + md.eta("-g'", k + 3)
    return out


def D_bold(md: ModeData, kappa: int) -> float:
    """Dissipative energy of order ``kappa``, term by term."""
    k = kappa
    out = (md.sq(md.a, k + 2) + md.sq(md.p, k + 1) + md.sq(md.v, k + 1)
           + md.sq(md.v, k + 2) + md.sq(md.w, k))
    if md.has_eta:
        # ||grad^{k+1} eta||_{H^2}^2 + ||Lap grad^k eta||_{H^1}^2
        out += (md.eta("-g'", k + 1) + md.eta("-g'", k + 2) + md.eta("-g'", k + 3)
                + md.eta("-g'", k + 2) + md.eta("-g'", k + 3))
    return out


def H_norm_sq(md: ModeData, j: int) -> float:
    """``||grad^j Psi||_H^2``."""
    out = md.sq(md.v, j + 1) + md.sq(md.a, j + 1) + md.sq(md.p, j)
    if md.has_eta:
        out += md.eta("-g'", j + 1)
    return out


def U_norm_sq(md: ModeData, j: int) -> float:
    """``||grad^j U||^2`` with ``U = (p, grad a, grad v)``."""
    return md.sq(md.p, j) + md.sq(md.a, j + 1) + md.sq(md.v, j + 1)


def homogeneous_norm_sq(md: ModeData, X, order: float) -> float:
    """``||f||^2`` in the homogeneous space of (possibly fractional) ``order``."""
    return float(np.sum(md.w8 * md.r2**order * np.abs(X) ** 2))


# ---------------------------------------------------------------- tailored energies


def E1(md: ModeData, kappa: int, params: MediumParams, kernel: MemoryKernel) -> float:
    """Tailored first-order energy; ``E2^(kappa)`` equals ``E1`` at ``kappa + 1``."""
    cg2, G, dprime = _constants(params, kernel)
    q = kappa + 1
    tau = params.tau
    out = cg2 * md.sq(md.a, q) + tau * dprime * md.sq(md.v, q) + md.sq(md.p, kappa)
    if md.has_eta:
        out += tau * md.eta("-g'", q) + md.eta("g", q) + 2 * tau * md.eta_v(q)
    return 0.5 * out


def E2(md, kappa, params, kernel) -> float:
    return E1(md, kappa + 1, params, kernel)


def F1(md, kappa) -> float:
    return md.cross(md.a, md.p, kappa + 1)


def F2(md, kappa) -> float:
    return -md.tau * md.cross(md.v, md.p, kappa + 1)


def F3(md, kappa) -> float:
    return -md.tau * md.eta_v(kappa + 1)


def F4(md, kappa) -> float:
    return -md.tau * md.eta_v(kappa + 2)


def aux_functionals(state, kappa: int, params: MediumParams, kernel: MemoryKernel, **kw) -> dict:
    """``E1, E2, F1..F4`` of order ``kappa``. Quantities that need ``eta``
    are ``nan`` for reduced states without a tracked history; their names
    are listed under ``"unsupported"``."""
    md = state if isinstance(state, ModeData) else mode_data(state, params, kernel, **kw)
    out = {"unsupported": []}
    for name, fn in (("E1", lambda: E1(md, kappa, params, kernel)),
                     ("E2", lambda: E2(md, kappa, params, kernel)),
                     ("F1", lambda: F1(md, kappa)), ("F2", lambda: F2(md, kappa)),
                     ("F3", lambda: F3(md, kappa)), ("F4", lambda: F4(md, kappa))):
        if not md.has_eta and name in ("E1", "E2", "F3", "F4"):
            out[name] = float("nan")
            out["unsupported"].append(name)
        else:
            out[name] = fn()
    return out


# ---------------------------------------------------------------- Lyapunov coefficients


@dataclass
class LyapunovCoeffs:
    eps0: float
    eps1: float
    eps2: float
    eps3: float
    eps4: float
    eps5: float
    eps6: float
    N0: float
    N1: float
    eps: float
    zeta: float
    constants: dict = field(default_factory=dict)
    f3_literal: bool = True
    f3_sign: float = 1.0   # fault-injection hook; -1 flips F3

    def as_dict(self):
        d = {k: getattr(self, k) for k in ("eps0", "eps1", "eps2", "eps3", "eps4", "eps5", "eps6",
                                           "N0", "N1", "eps", "zeta")}
        d["constants"] = dict(self.constants)
        d["f3_literal"] = self.f3_literal
        return d


def lyapunov_constants(params: MediumParams, kernel: MemoryKernel, eps0, eps1, eps2, eps3, eps4,
                       eps5, eps6, N0, N1, eps, zeta) -> dict:
    """Dissipation coefficients of the combined inequality, by direct formula.

    Each comes from Young's inequality on the exact time derivatives of
    ``E1, E2, ||w||^2, F1..F4``, with ``||.||_g^2 <= ||.||_{-g'}^2 / zeta``.
    """
    cg2, G, dprime = _constants(params, kernel)
    tau, delta = params.tau, params.delta
    g0 = kernel.g0(params)
    Ce0, Ce1 = dprime**2 / (4 * eps0), 1 / (4 * eps1)
    C23 = max(1 / (4 * eps3), tau**2 * cg2**2 / (4 * eps2) + tau * dprime + tau**2 * G / 2)
    Ce4, Ce5, Ce6 = tau**2 / (4 * eps4), 1 / (4 * eps5), 1 / (4 * eps6)
    Ccal = 3 * max(cg2**2, dprime**2, G / zeta)
    lam1 = N1 * Ce4 + N1 * (Ce5 + Ce6) / zeta
    lam2 = Ce1 / zeta + 1 / zeta + N1 * Ce4 + N1 * Ce6 / zeta
    lam3 = N1 * Ce5 / zeta
    strength = tau * G - eps4 * g0 - eps6 * G
    c = {
        "C_eta_1": N0 / 2 - lam1,
        "C_eta_2": N0 / 2 - 3 * N0 * eps * G / zeta - lam2,
        "C_eta_3": N0 / 2 - lam3,
        "C_a": cg2 - eps0 - G * eps1 - 2 * eps2 - 3 * N0 * eps * cg2**2,
        "C_p": 1 - 2 * eps3 - 2 * N1 * eps5 * G,
        "C_grad_v": N0 * delta + N1 * strength - 2 * C23,
        "C_lap_v": N0 * delta + N1 * strength - 2 * C23 - Ce0 - 3 * N0 * eps * dprime**2,
        "C_w": N0 * eps,
    }
    c["C_eta"] = min(c["C_eta_1"], c["C_eta_2"], c["C_eta_3"])
    c.update({"Lambda0": max(lam1, lam2, lam3), "C": Ccal, "C23": C23, "C_eps0": Ce0,
              "C_eps1": Ce1, "C_eps4": Ce4, "C_eps5": Ce5, "C_eps6": Ce6, "strength": strength})
    return c


POSITIVE = ("C_eta", "C_a", "C_p", "C_grad_v", "C_lap_v", "C_w")


def select_lyapunov_coeffs(params: MediumParams, kernel: MemoryKernel, safety: float = 0.5) -> LyapunovCoeffs:
    """Pick ``eps0..eps6, N1, N0, eps`` in the order of the proof, each strict
    bound taken with the factor ``safety``; then check every constant."""
    cg2, G, dprime = _constants(params, kernel)
    tau = params.tau
    if G <= 0:
        raise CoefficientSelectionError(
            "no admissible coefficients: the kernel has zero mass, so the memory terms "
            "provide no dissipation for v (F3/F4 lose their coercive part)")
    if params.delta < -1e-12:
        raise CoefficientSelectionError("selection needs b >= tau c^2")
    report = validate_assumptions(kernel, params)
    zeta = report.zeta_best
    if not zeta or zeta <= 0:
        raise CoefficientSelectionError("kernel has no positive decay rate zeta")
    g0 = kernel.g0(params)
    eps1 = safety * cg2 / (1 + G)
    eps0 = eps1
    eps2 = safety * (cg2 - eps0 * (1 + G)) / 2
    eps4 = eps6 = safety * tau * G / (g0 + G)
    eps3 = 0.125
    C0 = dprime**2 / (4 * eps0)
    C23 = max(1 / (4 * eps3), tau**2 * cg2**2 / (4 * eps2) + tau * dprime + tau**2 * G / 2)
    strength = tau * G - eps4 * (g0 + G)
    N1 = (C0 + 2 * C23) / strength / safety
    eps5 = safety * (1 - eps3) / (2 * N1 * G)
    probe = lyapunov_constants(params, kernel, eps0, eps1, eps2, eps3, eps4, eps5, eps6, 1.0, N1, 0.0, zeta)
    lam0 = probe["Lambda0"]
    N0 = 2 * lam0 / safety
    Ccal = probe["C"]
    bound = min(
        (N0 - 2 * lam0) / (2 * Ccal * N0),
        (cg2 - eps0 - G * eps1 - 2 * eps2) / (Ccal * N0),
        (N0 * params.delta + N1 * (tau * G - eps4 * g0 - eps6 * G) - 2 * C23 - C0) / (Ccal * N0),
    )
    eps = safety * bound
    consts = lyapunov_constants(params, kernel, eps0, eps1, eps2, eps3, eps4, eps5, eps6, N0, N1, eps, zeta)
    bad = [k for k in POSITIVE if not consts[k] > 0]
    if bad or not eps > 0:
        raise CoefficientSelectionError(f"selected constants not positive: {bad}")
    return LyapunovCoeffs(eps0, eps1, eps2, eps3, eps4, eps5, eps6, N0, N1, eps, zeta, consts)


def lyapunov(md: ModeData, kappa: int, params, kernel, coeffs: LyapunovCoeffs) -> float:
    """Lyapunov functional of order ``kappa``.

    The ``N1`` bracket uses ``F3`` of order zero at every ``kappa`` unless
    ``coeffs.f3_literal`` is off.
    """
    k3 = 0 if coeffs.f3_literal else kappa
    main = (E1(md, kappa, params, kernel) + E2(md, kappa, params, kernel) + E2(md, kappa + 1, params, kernel)
            + coeffs.eps * params.tau * md.sq(md.w, kappa))
    return (coeffs.N0 * main + F1(md, kappa) + 2 * F2(md, kappa)
            + coeffs.N1 * (coeffs.f3_sign * F3(md, k3) + F4(md, kappa)))


def lyapunov_dissipation(md: ModeData, coeffs: LyapunovCoeffs) -> float:
    """Weighted dissipation ``sum C_i * term_i`` of the order-zero inequality."""
    c = coeffs.constants
    return (c["C_eta_1"] * md.eta("-g'", 1) + c["C_eta_2"] * md.eta("-g'", 2) + c["C_eta_3"] * md.eta("-g'", 3)
            + c["C_a"] * md.sq(md.a, 2) + c["C_p"] * md.sq(md.p, 1) + c["C_grad_v"] * md.sq(md.v, 1)
            + c["C_lap_v"] * md.sq(md.v, 2) + c["C_w"] * md.sq(md.w, 0))


def lyapunov_rhs(md: ModeData, coeffs: LyapunovCoeffs, tau: float) -> float:
    """Right-hand side of the order-zero inequality (zero for linear runs)."""
    if md.F is None:
        return 0.0
    N0, eps = coeffs.N0, coeffs.eps
    R1 = lambda X, q: abs(md.forcing_dot(X, q))        # noqa: E731
    R2 = lambda X, q: abs(md.forcing_dot(X, q + 1))    # noqa: E731
    return (N0 * (R1(md.p, 0) + R2(md.p, 0) + abs(md.forcing_dot(md.p, 2)))
            + 2 * eps * N0 * R1(md.w, 0) + R2(md.a, 0) + 2 * R2(tau * md.v, 0))


# ---------------------------------------------------------------- equivalence bounds


def equivalence_bounds(params: MediumParams, kernel: MemoryKernel, coeffs: LyapunovCoeffs, rho_sq):
    """Best constants with ``C1 E_bold^(0) <= F^(0) <= C2 E_bold^(0)`` per mode.

    Exponential kernels only (``-g' = g / tau_g``). Per mode, ``eta`` splits
    in ``L2_g`` into its component along the constant function and an
    orthogonal remainder; the cross terms see only the former, so both
    functionals become quadratic forms in ``(psi, v, w, y)`` plus a scalar
    part. Returns ``(C1, C2)`` over the nonzero ``rho_sq`` given.
    """
    if not isinstance(kernel, ExponentialKernel):
        raise UnsupportedRepresentationError("equivalence bounds need an exponential kernel")
    import scipy.linalg as sla

    cg2, G, dprime = _constants(params, kernel)
    tau, zp = params.tau, 1.0 / kernel.tau_g
    N0, N1, eps = coeffs.N0, coeffs.N1, coeffs.eps
    e = np.eye(4)
    a, p, v, w, y = e[0] + tau * e[1], e[1] + tau * e[2], e[1], e[2], e[3]
    sym = lambda x, z: 0.5 * (np.outer(x, z) + np.outer(z, x))  # noqa: E731
    lo, hi = np.inf, -np.inf
    sG = math.sqrt(G)
    for r2 in np.unique(np.asarray(rho_sq, dtype=float)):
        if r2 <= 0:
            continue
        Em = ((r2 + r2**2 + r2**3) * (sym(a, a) + sym(v, v)) + (1 + r2 + r2**2) * sym(p, p)
              + sym(w, w) + zp * (r2 + r2**2 + r2**3) * sym(y, y))
        Fm = np.zeros((4, 4))
        for q in (1, 2, 3):
            r = r2**q
            Fm += N0 * 0.5 * (cg2 * r * sym(a, a) + tau * dprime * r * sym(v, v)
                              + r2 ** (q - 1) * sym(p, p) + (tau * zp + 1) * r * sym(y, y)
                              + 2 * tau * r * sG * sym(y, v))
        Fm += N0 * eps * tau * sym(w, w)
        Fm += r2 * sym(a, p) - 2 * tau * r2 * sym(v, p)
        Fm += -N1 * tau * (coeffs.f3_sign * r2 + r2**2) * sG * sym(y, v)
        lam = sla.eigh(Fm, Em, eigvals_only=True)
        f_perp = N0 * 0.5 * (tau * zp + 1) * (r2 + r2**2 + r2**3)
        e_perp = zp * (r2 + r2**2 + r2**3)
        lo = min(lo, lam.min(), f_perp / e_perp)
        hi = max(hi, lam.max(), f_perp / e_perp)
    return float(lo), float(hi)


# ---------------------------------------------------------------- reports


@dataclass
class EnergyReport:
    s: int
    triple_norm_sq: float
    seminorm_sq: float
    E_bold: list
    D_bold: list
    E1: list
    E2: list
    F1: list
    F2: list
    F3: list
    F4: list
    lyapunov: list
    w_norm_sq: float
    U_norms: list
    H_norm_sq: list
    literal_triple_norm_sq: float
    literal_seminorm_sq: float
    unsupported: list = field(default_factory=list)

    def as_dict(self):
        return dict(self.__dict__)


def resolution_budget(grid, s: int) -> int:
    """Largest ``s`` whose highest multiplier stays finite at the grid Nyquist."""
    kmax_sq = float(grid.ksq.max())
    if kmax_sq <= 1:
        return grid.N // 4
    return min(grid.N // 4, int(300 / math.log10(kmax_sq)) - 3)


def sobolev_suite(state, s: int, params: MediumParams, kernel: MemoryKernel,
                  coeffs: LyapunovCoeffs | None = None, mean_free: bool = False,
                  forcing: str | None = "off", n: int | None = None,
                  resolution_tol: float | None = None) -> EnergyReport:
    """Every norm and energy of a snapshot at regularity index ``s``."""
    if s < 1:
        raise RegularityIndexError("s must be at least 1")
    sp = state if isinstance(state, SpectralState) else SpectralState.from_state(state, kernel, params)
    if s > resolution_budget(sp.grid, s):
        raise ResolutionError(f"s={s} exceeds the resolution budget of {sp.grid}")
    md = mode_data(sp, params, kernel, mean_free=mean_free, forcing=forcing)
    if resolution_tol is not None:
        outside = md.w8 * (~sp.grid.dealias_mask)
        hi = float(np.sum(outside * _S(md.r2, 0, s + 2) * (np.abs(md.a) ** 2 + np.abs(md.v) ** 2)))
        tot = float(np.sum(md.w8 * _S(md.r2, 0, s + 2) * (np.abs(md.a) ** 2 + np.abs(md.v) ** 2)))
        if tot > 0 and hi > resolution_tol * tot:
            raise ResolutionError(f"{hi / tot:.2e} of the H^{s + 2} weight sits above the dealias cutoff")
    n = sp.grid.n if n is None else n
    s0 = max(0, (2 * s - n) // 4)
    unsupported = [] if md.has_eta else ["eta terms", "E1", "E2", "F3", "F4", "lyapunov"]
    nan = float("nan")
    kap = range(s)
    E1s = [E1(md, k, params, kernel) if md.has_eta else nan for k in kap]
    E2s = [E2(md, k, params, kernel) if md.has_eta else nan for k in kap]
    F3s = [F3(md, k) if md.has_eta else nan for k in kap]
    F4s = [F4(md, k) if md.has_eta else nan for k in kap]
    lyap = [lyapunov(md, k, params, kernel, coeffs) if (coeffs and md.has_eta) else nan for k in kap]
    return EnergyReport(
        s=s,
        triple_norm_sq=triple_norm_sq(md, s),
        seminorm_sq=seminorm_sq(md, s),
        E_bold=[E_bold(md, k) for k in kap],
        D_bold=[D_bold(md, k) for k in kap],
        E1=E1s, E2=E2s,
        F1=[F1(md, k) for k in kap], F2=[F2(md, k) for k in kap], F3=F3s, F4=F4s,
        lyapunov=lyap,
        w_norm_sq=md.sq(md.w, 0),
        U_norms=[U_norm_sq(md, j) for j in range(s0 + 1)],
        H_norm_sq=[H_norm_sq(md, j) for j in range(s)],
        literal_triple_norm_sq=literal_triple_norm_sq(md, s),
        literal_seminorm_sq=literal_seminorm_sq(md, s),
        unsupported=unsupported,
    )


def embedding_ratio(state, s: int, params, kernel, **kw) -> float:
    """``|||grad Psi|||_{H^{s-2}} / |Psi|_{H^s}`` for one state."""
    md = state if isinstance(state, ModeData) else mode_data(state, params, kernel, **kw)
    den = seminorm_sq(md, s)
    return math.sqrt(triple_norm_sq(md, s - 2, shift=1) / den) if den > 0 else float("nan")


# ---------------------------------------------------------------- trajectory diagnostics


def _linf_vector(fields) -> float:
    return float(np.max(np.sqrt(sum(f**2 for f in fields))))


def snapshot_scalars(sp: SpectralState, params: MediumParams, kernel: MemoryKernel, s: int | None = None,
                     kappas=(0,), coeffs: LyapunovCoeffs | None = None, forcing="off",
                     mean_free: bool = False, n: int | None = None, linf: bool = False) -> dict:
    """Every scalar the residual and weighted-norm reductions need for one snapshot."""
    md = mode_data(sp, params, kernel, mean_free=mean_free, forcing=forcing)
    cg2, G, dprime = _constants(params, kernel)
    tau = params.tau
    out = {}
    for k in kappas:
        out[f"Ebold_{k}"] = E_bold(md, k)
        out[f"Dbold_{k}"] = D_bold(md, k)
        out[f"w_sq_{k}"] = md.sq(md.w, k)
        out[f"R1p_{k}"] = abs(md.forcing_dot(md.p, k))
        out[f"R2p_{k}"] = abs(md.forcing_dot(md.p, k + 1))
        out[f"R1w_{k}"] = abs(md.forcing_dot(md.w, k))
        if md.has_eta:
            out[f"bound_w_{k}"] = 1.5 * (cg2**2 * md.sq(md.a, k + 2) + dprime**2 * md.sq(md.v, k + 2)
                                         + G * md.eta("g", k + 2))
            out[f"E1_{k}"] = E1(md, k, params, kernel)
            out[f"E2_{k}"] = E2(md, k, params, kernel)
            out[f"eta_gp_{k + 1}"] = md.eta("-g'", k + 1)
            out[f"eta_gp_{k + 2}"] = md.eta("-g'", k + 2)
            for nm, fn in (("F1", F1), ("F2", F2), ("F3", F3), ("F4", F4)):
                out[f"{nm}_{k}"] = fn(md, k)
    if coeffs is not None and md.has_eta:
        out["lyap_0"] = lyapunov(md, 0, params, kernel, coeffs)
        out["lyap_diss_0"] = lyapunov_dissipation(md, coeffs)
        out["lyap_rhs_0"] = lyapunov_rhs(md, coeffs, tau)
    if s is not None:
        n = sp.grid.n if n is None else n
        s0 = (2 * s - n) // 4
        out["triple"] = triple_norm_sq(md, s)
        out["semi"] = seminorm_sq(md, s)
        for i in range((s - 1) // 2 + 1):
            out[f"triple_shift_{i}"] = triple_norm_sq(md, s - 2 * i, shift=i)
            out[f"semi_shift_{i}"] = seminorm_sq(md, s - 2 * i, shift=i)
        for j in range(max(s0, 0) + 1):
            out[f"U_l2_{j}"] = math.sqrt(U_norm_sq(md, j))
            out[f"v_l2_{j}"] = math.sqrt(md.sq(md.v, j))
            out[f"w_l2_{j}"] = math.sqrt(md.sq(md.w, j))
    if linf:
        out.update(linf_scalars(sp, params, mean_free))
    return out


def linf_scalars(sp: SpectralState, params: MediumParams, mean_free=False) -> dict:
    """``||grad^j U||_inf`` and ``||grad^j v||_inf`` for ``j = 0, 1`` (pointwise Euclidean norms)."""
    g = sp.grid
    keep = (g.ksq > 0) if mean_free else 1.0
    p = (sp.v + params.tau * sp.w) * keep
    a, v = sp.psi * keep + params.tau * sp.v * keep, sp.v * keep
    grad_a = [g.inverse(x) for x in g.grad(a)]
    grad_v = [g.inverse(x) for x in g.grad(v)]
    U0 = [g.inverse(p)] + grad_a + grad_v
    U1 = []
    for comp in [p] + g.grad(a) + g.grad(v):
        U1 += [g.inverse(x) for x in g.grad(comp)]
    return {
        "U_inf_0": _linf_vector(U0),
        "U_inf_1": _linf_vector(U1),
        "v_inf_0": float(np.max(np.abs(g.inverse(v)))),
        "v_inf_1": _linf_vector(grad_v),
    }


def diagnostics_hook(params, kernel, **kw):
    """Adapter for :func:`jmgt.solver.run`."""
    return lambda sp: snapshot_scalars(sp, params, kernel, **kw)


@dataclass
class WeightedNorms:
    times: np.ndarray
    E_weighted: np.ndarray
    D_weighted: np.ndarray
    M: dict
    M_cal: np.ndarray
    s: int
    s0: int

    def as_dict(self):
        return {"t": self.times.tolist(), "E_weighted": self.E_weighted.tolist(),
                "D_weighted": self.D_weighted.tolist(),
                "M": {k: v.tolist() for k, v in self.M.items()}, "M_cal": self.M_cal.tolist(),
                "s": self.s, "s0": self.s0}


def _running_sup(x):
    return np.maximum.accumulate(np.asarray(x, dtype=float))


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def weighted_norms(trajectory, s: int, n: int) -> WeightedNorms:
    """Time-weighted suprema and integrals from snapshot records.

    Needs records produced by :func:`snapshot_scalars` with ``s`` set (and
    ``linf=True`` for the ``M_j`` quantities).
    """
    s0 = (2 * s - n) // 4
    if s0 < 1:
        raise RegularityIndexError(f"s={s} gives s0={s0} < 1 in dimension {n}")
    recs = trajectory.records
    if not recs or "triple_shift_0" not in recs[0]:
        raise ConfigurationError("trajectory records lack weighted-norm scalars")
    t = np.array([r["t"] for r in recs])
    one = 1.0 + t
    imax = (s - 1) // 2
    Ew = np.zeros_like(t)
    Dw = np.zeros_like(t)
    for i in range(imax + 1):
        tri = np.array([r[f"triple_shift_{i}"] for r in recs])
        sem = np.array([r[f"semi_shift_{i}"] for r in recs])
        Ew += _running_sup(one ** (i - 0.5) * tri)
        Dw += _cumtrapz(one ** (i - 0.5) * sem, t) + _cumtrapz(one ** (i - 1.5) * tri, t)
    M = {}
    if "U_inf_0" in recs[0]:
        for nm in ("U", "v"):
            for j in (0, 1):
                M[f"M{j}_{nm}"] = _running_sup(one ** ((n + j) / 2) * np.array([r[f"{nm}_inf_{j}"] for r in recs]))
    Mcal = np.zeros_like(t)
    for j in range(s0 + 1):
        Mcal += _running_sup(one ** (n / 4 + j / 2) * np.array([r[f"U_l2_{j}"] for r in recs]))
    for j in range(s0):
        vj = np.array([r[f"v_l2_{j}"] for r in recs])
        wj = np.array([r[f"w_l2_{j}"] for r in recs])
        Mcal += _running_sup(one ** (n / 4 + j / 2) * vj + one ** (n / 4 + 0.5 + j / 2) * wj)
    return WeightedNorms(t, Ew, Dw, M, Mcal, s, s0)


@dataclass
class ResidualReport:
    """Slack (right side minus left side) per inequality at interior snapshots,
    with a matching tolerance series per inequality."""

    times: np.ndarray
    slack: dict
    tolerance: dict

    def worst(self) -> dict:
        """Minimum of slack / tolerance (below -1 means a violation)."""
        return {k: float(np.min(v / np.maximum(self.tolerance[k], 1e-300))) for k, v in self.slack.items()}

    def passed(self) -> dict:
        return {k: bool(np.all(v >= -self.tolerance[k])) for k, v in self.slack.items()}

    def as_dict(self):
        return {"t": self.times.tolist(), "slack": {k: v.tolist() for k, v in self.slack.items()},
                "tolerance": {k: v.tolist() for k, v in self.tolerance.items()}, "passed": self.passed()}


def energy_residuals(trajectory, kappa: int, params: MediumParams, tol_factor: float = 10.0) -> ResidualReport:
    """Discrete slack of the three energy inequalities of order ``kappa``
    (and of the combined Lyapunov inequality at order zero when recorded).

    Time derivatives are centred differences on the snapshot grid. The
    tolerance is ``tol_factor * dt^2 * scale`` with ``scale`` the energy of
    order ``kappa`` (the Lyapunov functional itself for the combined one).
    """
    recs = trajectory.records
    if len(recs) < 3:
        raise ConfigurationError("need at least three snapshots for centred differences")
    k = kappa
    if f"E1_{k}" not in recs[0]:
        raise UnsupportedRepresentationError("residuals need the history variable eta")
    t = np.array([r["t"] for r in recs])
    col = lambda key: np.array([r[key] for r in recs])  # noqa: E731
    ddt = lambda y: (y[2:] - y[:-2]) / (t[2:] - t[:-2])  # noqa: E731
    mid = slice(1, -1)
    tau = params.tau
    slack = {
        "dE1": col(f"R1p_{k}")[mid] - (ddt(col(f"E1_{k}")) + 0.5 * col(f"eta_gp_{k + 1}")[mid]),
        "dE1_k": col(f"R2p_{k}")[mid] - (ddt(col(f"E2_{k}")) + 0.5 * col(f"eta_gp_{k + 2}")[mid]),
        "dE2": (col(f"bound_w_{k}")[mid] + col(f"R1w_{k}")[mid]
                - (0.5 * tau * ddt(col(f"w_sq_{k}")) + 0.5 * col(f"w_sq_{k}")[mid])),
    }
    dt = np.maximum(t[2:] - t[1:-1], t[1:-1] - t[:-2])
    base = tol_factor * dt**2 * col(f"Ebold_{k}")[mid]
    tol = {key: base for key in slack}
    if k == 0 and "lyap_0" in recs[0]:
        slack["F_Lyap"] = col("lyap_rhs_0")[mid] - (ddt(col("lyap_0")) + col("lyap_diss_0")[mid])
        tol["F_Lyap"] = tol_factor * dt**2 * np.abs(col("lyap_0")[mid])
    return ResidualReport(t[mid], slack, tol)
