"""Brute-force reference implementations used by the test-suite.

Nothing here shares numerical kernels with the production modules: matrix
exponentials come from eigen-decompositions (or a plain Taylor series),
polynomial roots from hand-built companion matrices, memory integrals from
direct convolution of a stored trajectory and spatial derivatives from
finite differences. Speed is irrelevant; clarity is the point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class OracleResult:
    value: np.ndarray
    error_estimate: float
    fallback: bool = False


def _expm_taylor(A: np.ndarray, t: float) -> np.ndarray:
    """Taylor series with scaling and squaring, no Pade."""
    M = t * np.asarray(A, dtype=complex)
    nrm = np.linalg.norm(M, 1)
    s = max(0, int(math.ceil(math.log2(nrm))) + 1) if nrm > 0.5 else 0
    M = M / 2**s
    term = np.eye(M.shape[0], dtype=complex)
    out = term.copy()
    for k in range(1, 40):
        term = term @ M / k
        out = out + term
        if np.linalg.norm(term, 1) < 1e-18 * np.linalg.norm(out, 1):
            break
    for _ in range(s):
        out = out @ out
    return out


def expm_eigen(A, t: float = 1.0, cond_max: float = 1e12) -> OracleResult:
    """``V diag(exp(lam t)) V^{-1}``; Taylor fallback when V is ill-conditioned."""
    A = np.asarray(A)
    lam, V = np.linalg.eig(A)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > cond_max:
        out = _expm_taylor(A, t)
        val = out.real if np.isrealobj(A) else out
        return OracleResult(val, float("nan"), fallback=True)
    out = V @ np.diag(np.exp(lam * t)) @ np.linalg.inv(V)
    val = out.real if np.isrealobj(A) else out
    err = cond * np.finfo(float).eps * np.max(np.abs(np.exp(lam * t)))
    return OracleResult(val, float(err))


def companion(coeffs) -> np.ndarray:
    a = np.asarray(coeffs, dtype=complex)
    if a[0] == 0:
        raise ValueError("leading coefficient must be nonzero")
    a = a / a[0]
    n = a.size - 1
    C = np.zeros((n, n), dtype=complex)
    C[0, :] = -a[1:]
    C[1:, :-1] = np.eye(n - 1)
    return C


def poly_eval(coeffs, x):
    """Horner evaluation."""
    out = np.zeros_like(np.asarray(x, dtype=complex))
    for c in coeffs:
        out = out * x + c
    return out


def poly_roots(coeffs) -> OracleResult:
    """Roots as companion-matrix eigenvalues; error estimate = max |p(root)|."""
    C = companion(coeffs)
    roots = np.linalg.eigvals(C)
    res = np.abs(poly_eval(coeffs, roots))
    return OracleResult(roots, float(res.max()) if res.size else 0.0)


def direct_convolution_memory(psi_history, kernel_values, dt: float) -> np.ndarray:
    """Trapezoidal ``int_0^t g(r) psi(t - r) dr`` from a stored trajectory.

    Parameters
    ----------
    psi_history : array, shape (K+1, ...)
        ``psi`` at times ``0, dt, ..., K dt`` (any spatial representation,
        e.g. Fourier coefficients; the Laplacian commutes with the integral).
    kernel_values : array, shape (K+1,)
        ``g(j dt)`` for ``j = 0..K``.
    """
    psi_history = np.asarray(psi_history)
    g = np.asarray(kernel_values)
    if g.shape[0] != psi_history.shape[0]:
        raise ConfigurationError("kernel samples must match the stored trajectory length")
    K = psi_history.shape[0] - 1
    if K == 0:
        return np.zeros_like(psi_history[0])
    w = np.full(K + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    # psi(t - r_j) = psi_history[K - j]
    rev = psi_history[::-1]
    return np.tensordot(w * g, rev, axes=(0, 0))


def memory_term_from_convolution(psi_history, kernel_values, dt, G) -> np.ndarray:
    """``int_0^inf g eta dr = G psi(t) - int_0^t g(r) psi(t-r) dr`` (without the Laplacian)."""
    psi_history = np.asarray(psi_history)
    return G * psi_history[-1] - direct_convolution_memory(psi_history, kernel_values, dt)


def richardson_memory_term(psi_fine, g_fine, dt_fine, G) -> np.ndarray:
    """Trapezoid on grids ``h`` and ``2h`` combined to cancel the ``h^2`` term.

    The convolution integrand is smooth on ``[0, t]`` so the extrapolated
    value is fourth order.
    """
    psi_fine = np.asarray(psi_fine)
    g_fine = np.asarray(g_fine)
    if (psi_fine.shape[0] - 1) % 2:
        raise ConfigurationError("Richardson needs an even number of steps")
    fine = direct_convolution_memory(psi_fine, g_fine, dt_fine)
    coarse = direct_convolution_memory(psi_fine[::2], g_fine[::2], 2 * dt_fine)
    conv = (4 * fine - coarse) / 3
    return G * psi_fine[-1] - conv


# finite-difference spatial operators on a periodic grid -------------------

def fd_derivative(f: np.ndarray, dx: float, axis: int, order: int = 4) -> np.ndarray:
    """Central periodic difference of the given (even) accuracy order."""
    if order == 2:
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * dx)
    if order == 4:
        return (-np.roll(f, -2, axis) + 8 * np.roll(f, -1, axis)
                - 8 * np.roll(f, 1, axis) + np.roll(f, 2, axis)) / (12 * dx)
    if order == 6:
        return (np.roll(f, -3, axis) - 9 * np.roll(f, -2, axis) + 45 * np.roll(f, -1, axis)
                - 45 * np.roll(f, 1, axis) + 9 * np.roll(f, 2, axis) - np.roll(f, 3, axis)) / (60 * dx)
    raise ValueError("order must be 2, 4 or 6")


def fd_gradient(f, dx, order=4):
    return [fd_derivative(f, dx, ax, order) for ax in range(f.ndim)]


def fd_laplacian(f, dx, order=4):
    out = np.zeros_like(f)
    for ax in range(f.ndim):
        if order == 2:
            out += (np.roll(f, -1, ax) - 2 * f + np.roll(f, 1, ax)) / dx**2
        else:
            out += (-np.roll(f, -2, ax) + 16 * np.roll(f, -1, ax) - 30 * f
                    + 16 * np.roll(f, 1, ax) - np.roll(f, 2, ax)) / (12 * dx**2)
    return out


def fd_nonlinearity(psi, v, w, dx, tau, k, form="def_F", order=4):
    """Real-space evaluation of the quadratic forcing with finite differences."""
    gp = fd_gradient(psi, dx, order)
    gv = fd_gradient(v, dx, order)
    dot = sum(a * b for a, b in zip(gp, gv))
    if form == "def_F":
        return (2.0 / tau) * (k * v * w + dot)
    return (2.0 * k / tau) * (v * w + dot)


def riemann_l2_sq(f, dx) -> float:
    """``int |f|^2 dx`` by the periodic rectangle rule (spectrally exact for trig polynomials)."""
    return float(np.sum(np.abs(f) ** 2) * dx ** f.ndim)
