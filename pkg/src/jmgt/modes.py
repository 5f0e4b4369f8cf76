"""Per-frequency linear analysis.

After a spatial Fourier transform the linearised system decouples into one
small ODE per wavenumber. For the exponential kernel the memory integral
``z = int g eta dr`` obeys its own ODE, which closes the system at 4x4 over
``(psi, v, w, z)``::

    psi' = v
    v'   = w
    tau w' = -w - c_g^2 rho^2 psi - b rho^2 v - rho^2 z
    z'   = (c^2 - c_g^2) v - z / tau_g

The alternative ``HistoryGrid`` representation keeps ``eta`` on an age grid
and exists mainly to cross-check the reduction.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateModeError,
    NumericOverflowError,
    UnsupportedRepresentationError,
)
from .medium import CRITICAL_TOL, ExponentialKernel, MediumParams, MemoryKernel


class Stability(str, enum.Enum):
    STABLE = "AsymptoticallyStable"
    MARGINAL = "Marginal"
    UNSTABLE = "Unstable"


@dataclass(frozen=True)
class HistoryGrid:
    """Age-grid representation with ``n_r`` interior nodes on ``(0, r_max]``."""

    n_r: int
    r_max: float

    @property
    def dr(self):
        return self.r_max / self.n_r


REDUCED = "reduced"


@dataclass(frozen=True)
class ModeSystem:
    rho_sq: float
    generator: np.ndarray
    params: MediumParams
    kernel: MemoryKernel
    representation: object = REDUCED
    # HistoryGrid only: quadrature weights turning eta nodes into z
    z_weights: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self):
        return self.generator.shape[0]


@dataclass
class SpectrumSample:
    rho: float
    eigenvalues: np.ndarray
    abscissa: float
    flagged: bool = False


@dataclass
class AbscissaCurve:
    samples: list
    low_coef: float
    high_coef: float
    high_limit: float  # mean abscissa over the top decade (constant model)
    low_window: tuple = ()
    high_window: tuple = ()

    @property
    def rho(self):
        return np.array([s.rho for s in self.samples])

    @property
    def abscissa(self):
        return np.array([s.abscissa for s in self.samples])


def _kernel_constants(params: MediumParams, kernel: MemoryKernel):
    G = kernel.integral(params)
    return params.c**2 - G, G


def reduced_generator(params: MediumParams, kernel: ExponentialKernel, rho_sq) -> np.ndarray:
    """Batched 4x4 generators for an array of ``rho_sq`` values; shape ``(..., 4, 4)``."""
    if not isinstance(kernel, ExponentialKernel):
        raise UnsupportedRepresentationError(
            "the reduced (psi, v, w, z) system exists only for exponential kernels")
    rho_sq = np.asarray(rho_sq, dtype=float)
    cg2, G = _kernel_constants(params, kernel)
    tau = params.tau
    A = np.zeros(rho_sq.shape + (4, 4))
    A[..., 0, 1] = 1.0
    A[..., 1, 2] = 1.0
    A[..., 2, 0] = -cg2 * rho_sq / tau
    A[..., 2, 1] = -params.b * rho_sq / tau
    A[..., 2, 2] = -1.0 / tau
    A[..., 2, 3] = -rho_sq / tau
    A[..., 3, 1] = G
    A[..., 3, 3] = -1.0 / kernel.tau_g
    return A


def characteristic_quartic(params: MediumParams, kernel: ExponentialKernel, rho_sq: float) -> np.ndarray:
    """Coefficients (highest first) of
    ``(lam + 1/tau_g)(tau lam^3 + lam^2 + b rho^2 lam + c_g^2 rho^2) + (c^2 - c_g^2) rho^2 lam``.
    """
    cg2, G = _kernel_constants(params, kernel)
    tau, b, ig = params.tau, params.b, 1.0 / kernel.tau_g
    return np.array([
        tau,
        1.0 + tau * ig,
        b * rho_sq + ig,
        cg2 * rho_sq + b * rho_sq * ig + G * rho_sq,
        cg2 * rho_sq * ig,
    ])


def _upwind_matrix(n_r: int, dr: float) -> np.ndarray:
    """Differentiation matrix for ``d/dr`` on nodes r_1..r_n with eta(r_0)=0.

    Third-order upwind-biased stencil in the interior, centred second order at
    the first node and one-sided second order at the outflow node.
    """
    D = np.zeros((n_r, n_r))
    for i in range(n_r):
        j = i + 1  # physical node index; node 0 is the boundary (eta = 0)
        if j == 1:
            # (eta_2 - eta_0) / (2 dr)
            if n_r > 1:
                D[i, 1] = 0.5
        elif j == n_r:
            # (3 eta_n - 4 eta_{n-1} + eta_{n-2}) / (2 dr)
            D[i, i] = 1.5
            D[i, i - 1] = -2.0
            if i - 2 >= 0:
                D[i, i - 2] = 0.5
        else:
            # (2 eta_{j+1} + 3 eta_j - 6 eta_{j-1} + eta_{j-2}) / (6 dr)
            D[i, i + 1] = 2.0 / 6.0
            D[i, i] = 3.0 / 6.0
            D[i, i - 1] = -1.0
            if i - 2 >= 0:
                D[i, i - 2] = 1.0 / 6.0
    return D / dr


def gregory_weights(n_intervals: int, h: float) -> np.ndarray:
    """Composite trapezoid weights with third-order Gregory end corrections.

    Falls back to Simpson / trapezoid for very short ranges.
    """
    n = n_intervals
    if n <= 0:
        return np.zeros(1)
    w = np.full(n + 1, h)
    if n >= 6:
        corr = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])
        w[:3] = corr * h
        w[-3:] = corr[::-1] * h
    elif n % 2 == 0:
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= h / 3.0
    else:
        w[0] = w[-1] = 0.5 * h
    return w


def assemble_mode_system(params: MediumParams, kernel: MemoryKernel, rho_sq: float,
                         representation=REDUCED) -> ModeSystem:
    """Build the per-frequency generator.

    Parameters
    ----------
    representation : ``"reduced"`` or :class:`HistoryGrid`
        Reduced gives the 4x4 (psi, v, w, z) system and requires an
        exponential kernel. ``HistoryGrid(n_r, r_max)`` keeps
        ``eta(r_1..r_n)`` as unknowns (size ``3 + n_r``).
    """
    if rho_sq < 0:
        raise ValueError("rho_sq must be non-negative")
    if representation == REDUCED:
        A = reduced_generator(params, kernel, rho_sq)
        return ModeSystem(float(rho_sq), A, params, kernel, REDUCED)
    if not isinstance(representation, HistoryGrid):
        raise UnsupportedRepresentationError(f"unknown representation {representation!r}")
    n_r, dr = representation.n_r, representation.dr
    cg2, _ = _kernel_constants(params, kernel)
    tau = params.tau
    r = dr * np.arange(n_r + 1)
    q = gregory_weights(n_r, dr) * kernel.values(r, params)
    q[-1] += _tail_weight(kernel, params, representation.r_max)
    zw = q[1:]  # eta(r_0) = 0 contributes nothing
    size = 3 + n_r
    A = np.zeros((size, size))
    A[0, 1] = 1.0
    A[1, 2] = 1.0
    A[2, 0] = -cg2 * rho_sq / tau
    A[2, 1] = -params.b * rho_sq / tau
    A[2, 2] = -1.0 / tau
    A[2, 3:] = -rho_sq / tau * zw
    A[3:, 1] = 1.0
    A[3:, 3:] = -_upwind_matrix(n_r, dr)
    return ModeSystem(float(rho_sq), A, params, kernel, representation, z_weights=zw)


def _tail_weight(kernel, params, r_max):
    """Weight on eta(r_max) accounting for int_{r_max}^inf g (eta taken constant)."""
    if isinstance(kernel, ExponentialKernel):
        return float(kernel.tail_integral(r_max, params))
    return 0.0


def eigenvalues(system: ModeSystem) -> np.ndarray:
    """Eigenvalues via balanced Hessenberg QR, sorted by decreasing real part."""
    lam = sla.eigvals(system.generator, check_finite=True)
    return lam[np.argsort(-lam.real, kind="stable")]


def history_physical_eigenvalues(system: ModeSystem, seeds=None, tol=1e-13, maxiter=50):
    """Refine the eigenvalues of a HistoryGrid generator that continue the
    four branches of the reduced system.

    The dense spectrum of the discretised transport block is extremely
    non-normal, so instead of trusting QR output the physical eigenvalues
    are found by Newton iteration on the scalar Schur complement::

        K(lam) = tau lam^3 + lam^2 + b rho^2 lam + c_g^2 rho^2 + rho^2 lam zhat(lam)

    where ``zhat(lam) = q^T (lam - T)^{-1} 1`` is the discrete memory symbol.

    Returns
    -------
    lam : ndarray
        Refined eigenvalues.
    residual : ndarray
        ``sigma_min(A - lam I) / ||A||`` for each, confirming that ``lam`` is
        (numerically) in the spectrum of the assembled generator.
    """
    if not isinstance(system.representation, HistoryGrid):
        raise UnsupportedRepresentationError("needs a HistoryGrid system")
    A = system.generator
    p = system.params
    cg2, _ = _kernel_constants(p, system.kernel)
    n_r = system.representation.n_r
    T = A[3:, 3:]
    ones = np.ones(n_r)
    q = system.z_weights
    rho2 = system.rho_sq
    if seeds is None:
        seeds = eigenvalues(assemble_mode_system(p, system.kernel, rho2, REDUCED))
    eye = np.eye(n_r)

    def K(lam):
        x = np.linalg.solve(lam * eye - T, ones.astype(complex))
        dx = -np.linalg.solve(lam * eye - T, x)
        zh, dzh = q @ x, q @ dx
        val = p.tau * lam**3 + lam**2 + p.b * rho2 * lam + cg2 * rho2 + rho2 * lam * zh
        der = 3 * p.tau * lam**2 + 2 * lam + p.b * rho2 + rho2 * (zh + lam * dzh)
        return val, der

    out = []
    for lam in np.asarray(seeds, dtype=complex):
        for _ in range(maxiter):
            val, der = K(lam)
            step = val / der
            lam = lam - step
            if abs(step) <= tol * max(1.0, abs(lam)):
                break
        out.append(lam)
    out = np.array(out)
    nrm = np.linalg.norm(A, 2)
    res = np.array([np.linalg.svd(A - lam * np.eye(A.shape[0]), compute_uv=False)[-1] / nrm
                    for lam in out])
    return out, res


def routh_hurwitz(coeffs) -> tuple[Stability, np.ndarray]:
    """Hurwitz-determinant test for a real polynomial (highest degree first).

    Returns the classification and the leading principal minors. A minor
    that vanishes to relative precision ``CRITICAL_TOL`` marks the boundary.
    """
    a = np.asarray(coeffs, dtype=float)
    if a[0] < 0:
        a = -a
    deg = a.size - 1
    if np.any(a <= 0):
        # a necessary condition fails; zero coefficients give marginal or unstable
        return Stability.UNSTABLE, np.array([])
    H = np.zeros((deg, deg))
    for i in range(deg):
        for j in range(deg):
            k = 2 * (j + 1) - (i + 1)
            if 0 <= k <= deg:
                H[i, j] = a[k]
    minors = np.array([np.linalg.det(H[:m, :m]) for m in range(1, deg + 1)])
    scales = np.array([np.prod(np.sort(np.abs(np.diag(H[:m, :m])))) + 1e-300 for m in range(1, deg + 1)])
    rel = minors / scales
    if np.all(rel > CRITICAL_TOL):
        return Stability.STABLE, minors
    if np.any(rel < -CRITICAL_TOL):
        return Stability.UNSTABLE, minors
    return Stability.MARGINAL, minors


def no_memory_cubic(params: MediumParams, rho_sq: float) -> np.ndarray:
    """``tau lam^3 + lam^2 + b rho^2 lam + c^2 rho^2``."""
    return np.array([params.tau, 1.0, params.b * rho_sq, params.c**2 * rho_sq])


def routh_hurwitz_no_memory(params: MediumParams, rho_sq: float) -> Stability:
    """Stability of the memoryless mode: stable iff ``b > tau c^2``."""
    if rho_sq <= 0:
        raise DegenerateModeError("routh_hurwitz_no_memory needs rho_sq > 0")
    a3, a2, a1, a0 = no_memory_cubic(params, rho_sq)
    # the only nontrivial Hurwitz minor of a cubic is a2 a1 - a3 a0
    d = a2 * a1 - a3 * a0
    if abs(d) <= CRITICAL_TOL * a3 * a0:
        return Stability.MARGINAL
    return Stability.STABLE if d > 0 else Stability.UNSTABLE


def _power_fit(rho, absc, power):
    """Least-squares amplitude ``lam`` in ``absc ~ -lam * rho**power``."""
    x = rho**power
    return float(-np.dot(absc, x) / np.dot(x, x))


def abscissa_sweep(params: MediumParams, kernel: MemoryKernel, rho_grid,
                   representation=REDUCED, min_fit_points: int = 5) -> AbscissaCurve:
    """Spectral abscissa over a frequency grid plus asymptotic coefficients.

    ``low_coef`` fits ``abscissa ~ -low_coef * rho^2`` on the lowest decade,
    ``high_coef`` fits ``abscissa ~ -high_coef / rho^2`` on the highest one.
    Samples whose eigen-solve fails are flagged and skipped in the fits.
    """
    rho = np.asarray(rho_grid, dtype=float)
    if rho.ndim != 1 or rho.size < 2 or np.any(rho <= 0) or np.any(np.diff(rho) <= 0):
        raise ValueError("rho_grid must be positive and strictly increasing")
    samples = []
    for r in rho:
        try:
            lam = eigenvalues(assemble_mode_system(params, kernel, r * r, representation))
            if not np.all(np.isfinite(lam)):
                raise np.linalg.LinAlgError("non-finite eigenvalues")
            samples.append(SpectrumSample(float(r), lam, float(lam.real.max())))
        except (np.linalg.LinAlgError, ValueError):
            samples.append(SpectrumSample(float(r), np.full(4, np.nan + 0j), np.nan, flagged=True))
    ok = np.array([not s.flagged for s in samples])
    a = np.array([s.abscissa for s in samples])
    lo_mask = ok & (rho <= rho[0] * 10.0)
    hi_mask = ok & (rho >= rho[-1] / 10.0)
    if lo_mask.sum() < min_fit_points:
        lo_mask = ok & (np.arange(rho.size) < min_fit_points)
    if hi_mask.sum() < min_fit_points:
        hi_mask = ok & (np.arange(rho.size) >= rho.size - min_fit_points)
    low = _power_fit(rho[lo_mask], a[lo_mask], 2.0) if lo_mask.any() else np.nan
    high = _power_fit(rho[hi_mask], a[hi_mask], -2.0) if hi_mask.any() else np.nan
    limit = float(np.mean(a[hi_mask])) if hi_mask.any() else np.nan
    return AbscissaCurve(samples, low, high, limit,
                         (float(rho[lo_mask].min()), float(rho[lo_mask].max())) if lo_mask.any() else (),
                         (float(rho[hi_mask].min()), float(rho[hi_mask].max())) if hi_mask.any() else ())


def propagate_mode(system: ModeSystem, state0, t: float) -> np.ndarray:
    """``expm(t A) state0`` by scaling and squaring (scipy)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    state0 = np.asarray(state0)
    if t == 0:
        return state0.copy()
    out = sla.expm(t * system.generator) @ state0
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError(f"non-finite mode state at t={t}")
    return out


def batched_propagators(params, kernel, rho_sq, t) -> np.ndarray:
    """``expm(t A(rho_sq))`` for an array of ``rho_sq``; shape ``(M, 4, 4)``."""
    A = reduced_generator(params, kernel, np.atleast_1d(rho_sq))
    return sla.expm(t * A)


def sweep_csv_rows(curve: AbscissaCurve):
    """Rows ``rho, re_lambda_1..4, im_lambda_1..4, abscissa`` for CSV output."""
    header = (["rho"] + [f"re_lambda_{i}" for i in range(1, 5)]
              + [f"im_lambda_{i}" for i in range(1, 5)] + ["abscissa"])
    rows = []
    for s in curve.samples:
        lam = np.asarray(s.eigenvalues)[:4]
        rows.append([s.rho, *lam.real, *lam.imag, s.abscissa])
    return header, rows
