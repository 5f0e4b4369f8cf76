"""Medium parameters, memory kernels and kernel-assumption checks.

The memory kernel of a relaxing medium is ``g(r) = m c**2 exp(-r / tau_g)``.
Kernels are evaluated against a :class:`MediumParams` because the exponential
amplitude scales with ``c**2``; tabulated kernels ignore the parameters.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import (
    ConfigurationError,
    InsufficientDataError,
    InvalidKernelError,
    KernelDomainError,
)

#: relative tolerance used to decide b == tau c^2
CRITICAL_TOL = 1e-12


class Regime(str, enum.Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "SupercriticalChiNegative"


@dataclass(frozen=True)
class MediumParams:
    """Physical constants of the medium.

    Parameters
    ----------
    tau : float
        Thermal relaxation time, > 0.
    c : float
        Sound speed, > 0.
    b : float
        Diffusivity of sound, > 0.
    k : float
        Nonlinearity coefficient multiplying ``v w``.
    alpha : float
        Friction coefficient. The first-order system is written with
        ``alpha = 1``; other values are rejected.
    """

    tau: float
    c: float
    b: float
    k: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("tau", "c", "b"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ConfigurationError(f"{name} must be positive and finite, got {val!r}")
        if not np.isfinite(self.k):
            raise ConfigurationError("k must be finite")
        if self.alpha != 1.0:
            raise ConfigurationError("alpha is normalised to 1; rescale time instead")

    @property
    def delta(self) -> float:
        """Sound diffusivity ``b - tau c^2``."""
        return self.b - self.tau * self.c**2

    @property
    def chi(self) -> float:
        return self.alpha - self.c**2 * self.tau / self.b

    @property
    def is_critical(self) -> bool:
        return abs(self.delta) <= CRITICAL_TOL * self.tau * self.c**2

    def with_(self, **changes) -> "MediumParams":
        data = dict(tau=self.tau, c=self.c, b=self.b, k=self.k, alpha=self.alpha)
        data.update(changes)
        return MediumParams(**data)


class MemoryKernel:
    """Interface shared by the kernel families."""

    kind = "abstract"

    def values(self, r, params: MediumParams) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, r, params: MediumParams) -> np.ndarray:
        raise NotImplementedError

    def second_derivative(self, r, params: MediumParams) -> np.ndarray:
        raise NotImplementedError

    def integral(self, params: MediumParams) -> float:
        """``int_0^inf g(r) dr``."""
        raise NotImplementedError

    def g0(self, params: MediumParams) -> float:
        return float(self.values(np.array([0.0]), params)[0])

    def default_r_max(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialKernel(MemoryKernel):
    """``g(r) = m c^2 exp(-r / tau_g)``."""

    m: float
    tau_g: float
    kind: str = field(default="exponential", init=False)

    def __post_init__(self):
        if not (np.isfinite(self.tau_g) and self.tau_g > 0):
            raise InvalidKernelError(f"tau_g must be positive, got {self.tau_g!r}")
        if not (np.isfinite(self.m) and self.m >= 0):
            raise InvalidKernelError(f"relaxation parameter m must be >= 0, got {self.m!r}")

    def amplitude(self, params: MediumParams) -> float:
        return self.m * params.c**2

    def values(self, r, params):
        return self.amplitude(params) * np.exp(-np.asarray(r, dtype=float) / self.tau_g)

    def derivative(self, r, params):
        return -self.values(r, params) / self.tau_g

    def second_derivative(self, r, params):
        return self.values(r, params) / self.tau_g**2

    def integral(self, params):
        return self.amplitude(params) * self.tau_g

    def tail_integral(self, r, params):
        """``int_r^inf g``, closed form."""
        return self.values(r, params) * self.tau_g

    def numeric_integral(self, params) -> float:
        """Adaptive quadrature of the kernel; used to cross-check :meth:`integral`."""
        val, _ = integrate.quad(lambda x: float(self.values(x, params)), 0.0, np.inf,
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return val

    def default_r_max(self) -> float:
        return 25.0 * self.tau_g


class TabulatedKernel(MemoryKernel):
    """Kernel given by samples ``(r_i, g_i)``.

    Interpolation is monotone cubic (PCHIP), which keeps non-negative data
    non-negative. The kernel is taken to vanish beyond the last sample.
    """

    kind = "tabulated"

    def __init__(self, r, g):
        r = np.asarray(r, dtype=float)
        g = np.asarray(g, dtype=float)
        if r.ndim != 1 or r.shape != g.shape:
            raise ConfigurationError("tabulated kernel needs two 1-D arrays of equal length")
        if r.size < 3:
            raise InsufficientDataError(f"tabulated kernel needs at least 3 samples, got {r.size}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(g))):
            raise ConfigurationError("tabulated kernel contains non-finite samples")
        if np.any(np.diff(r) <= 0):
            raise ConfigurationError("kernel sample positions must be strictly increasing")
        if r[0] < 0:
            raise ConfigurationError("kernel sample positions must be >= 0")
        self.r = r
        self.g = g
        self._interp = PchipInterpolator(r, g, extrapolate=True)
        self._d1 = self._interp.derivative(1)
        self._d2 = self._interp.derivative(2)

    @classmethod
    def from_csv(cls, path) -> "TabulatedKernel":
        """Read a two-column ``r, g`` CSV (an optional header line is skipped)."""
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"kernel file not found: {path}")
        rows = []
        with path.open(newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].strip().startswith("#"):
                    continue
                if len(row) != 2:
                    raise ConfigurationError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if lineno == 1 and not rows:
                        continue  # header
                    raise ConfigurationError(f"{path}:{lineno}: non-numeric entry {row!r}") from None
        if not rows:
            raise InsufficientDataError(f"{path}: no samples")
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1])

    def _mask(self, r):
        r = np.asarray(r, dtype=float)
        return r, (r >= 0) & (r <= self.r[-1])

    def values(self, r, params=None):
        r, inside = self._mask(r)
        return np.where(inside, self._interp(np.clip(r, 0, self.r[-1])), 0.0)

    def derivative(self, r, params=None):
        r, inside = self._mask(r)
        return np.where(inside, self._d1(np.clip(r, 0, self.r[-1])), 0.0)

    def second_derivative(self, r, params=None):
        r, inside = self._mask(r)
        return np.where(inside, self._d2(np.clip(r, 0, self.r[-1])), 0.0)

    def integral(self, params=None):
        # exact integral of the piecewise cubic (extrapolated below the first sample)
        return float(self._interp.integrate(0.0, self.r[-1]))

    def default_r_max(self) -> float:
        return float(self.r[-1])


@dataclass
class CheckResult:
    passed: bool
    witness: float | None = None  # r where the check is tightest / fails
    value: float | None = None
    detail: str = ""

    def as_dict(self):
        return {"passed": bool(self.passed), "witness": self.witness,
                "value": self.value, "detail": self.detail}


@dataclass
class KernelReport:
    G1: CheckResult
    G2: CheckResult
    G3: CheckResult
    G4: CheckResult
    c_g_sq: float
    zeta_best: float
    kind: str

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in (self.G1, self.G2, self.G3, self.G4))

    def as_dict(self):
        return {
            "kind": self.kind,
            "checks": {k: getattr(self, k).as_dict() for k in ("G1", "G2", "G3", "G4")},
            "all_pass": self.all_pass,
            "c_g_sq": self.c_g_sq,
            "zeta_best": self.zeta_best,
        }


def _probe_grid(kernel: TabulatedKernel, n_probe: int = 4001) -> np.ndarray:
    # uniform on purpose: merging in the sample points creates tiny gaps that
    # blow up the second difference quotients
    return np.linspace(kernel.r[0], kernel.r[-1], n_probe)


def validate_assumptions(kernel: MemoryKernel, params: MediumParams,
                         n_probe: int = 4001) -> KernelReport:
    """Check the kernel hypotheses G1-G4.

    For exponential kernels every check is decided in closed form and
    ``zeta_best = 1 / tau_g``. Tabulated kernels are probed on a uniform grid
    using finite-difference derivatives.
    """
    if isinstance(kernel, ExponentialKernel):
        G = kernel.integral(params)
        c2 = params.c**2
        g1 = CheckResult(True, detail="smooth closed form")
        g2 = CheckResult(G < c2, witness=0.0, value=c2 - G,
                         detail=f"int g = {G:.6g} vs c^2 = {c2:.6g}")
        g3 = CheckResult(True, witness=0.0, value=1.0 / kernel.tau_g, detail="g' = -g / tau_g")
        g4 = CheckResult(True, witness=0.0, value=kernel.second_derivative(0.0, params).item(),
                         detail="g'' = g / tau_g^2 >= 0")
        return KernelReport(g1, g2, g3, g4, c_g_sq=c2 - G, zeta_best=1.0 / kernel.tau_g,
                            kind=kernel.kind)

    if not isinstance(kernel, TabulatedKernel):
        raise InvalidKernelError(f"unknown kernel type {type(kernel).__name__}")

    r = _probe_grid(kernel, n_probe)
    g = kernel.values(r)
    # finite differences on the probe grid (second order, one-sided at ends)
    dg = np.gradient(g, r, edge_order=2)
    d2g = np.gradient(dg, r, edge_order=2)
    scale = max(np.max(np.abs(g)), np.finfo(float).tiny)
    span = r[-1] - r[0]

    finite = np.all(np.isfinite(dg)) and np.all(np.isfinite(d2g))
    g1 = CheckResult(bool(finite), detail="difference quotients finite" if finite
                     else "non-finite difference quotient")

    G = kernel.integral()
    c2 = params.c**2
    imin = int(np.argmin(g))
    nonneg = g[imin] >= -1e-12 * scale
    g2 = CheckResult(bool(nonneg and G < c2), witness=float(r[imin]),
                     value=float(min(g[imin], c2 - G)),
                     detail=f"min g = {g[imin]:.3g}, int g = {G:.6g} vs c^2 = {c2:.6g}")

    # G3: sup of zeta with g' <= -zeta g, i.e. min of -g'/g where g > 0
    pos = g > 1e-14 * scale
    if np.any(~pos & (dg > 1e-12 * scale / span)):
        bad = r[~pos & (dg > 1e-12 * scale / span)][0]
        zeta = 0.0
        g3 = CheckResult(False, witness=float(bad), value=0.0, detail="g' > 0 where g vanishes")
    else:
        ratio = -dg[pos] / g[pos]
        j = int(np.argmin(ratio))
        zeta = float(ratio[j])
        ok = zeta > 1e-3 / span
        g3 = CheckResult(bool(ok), witness=float(r[pos][j]), value=zeta,
                         detail="min of -g'/g on probe grid")
        zeta = max(zeta, 0.0)

    dscale = max(np.max(np.abs(d2g)), np.finfo(float).tiny)
    j = int(np.argmin(d2g))
    g4 = CheckResult(bool(d2g[j] >= -1e-6 * dscale), witness=float(r[j]), value=float(d2g[j]),
                     detail="min of g'' on probe grid")
    return KernelReport(g1, g2, g3, g4, c_g_sq=c2 - G, zeta_best=zeta, kind=kernel.kind)


def effective_speed_sq(kernel: MemoryKernel, params: MediumParams) -> float:
    """``c_g^2 = c^2 - int g``; raises when the result is not positive."""
    cg2 = params.c**2 - kernel.integral(params)
    if not cg2 > 0:
        raise KernelDomainError(f"int g >= c^2 (c_g^2 = {cg2:.6g})")
    return cg2


def memory_strength(kernel: MemoryKernel, params: MediumParams) -> float:
    """``c^2 - c_g^2 = int g``."""
    return kernel.integral(params)


def classify_regime(params: MediumParams, kernel: MemoryKernel | None = None) -> tuple[Regime, float]:
    """Classify by the sign of ``b - tau c^2``.

    Returns the regime and ``chi = alpha - c^2 tau / b``. The kernel does not
    influence the classification; it is accepted for interface symmetry.
    """
    if params.is_critical:
        return Regime.CRITICAL, 0.0
    if params.delta > 0:
        return Regime.SUBCRITICAL, params.chi
    return Regime.SUPERCRITICAL, params.chi


def kernel_from_dict(block: dict) -> MemoryKernel:
    kind = str(block.get("kind", "exponential")).lower()
    if kind == "exponential":
        try:
            return ExponentialKernel(m=float(block.get("m", 0.0)), tau_g=float(block["tau_g"]))
        except KeyError:
            raise ConfigurationError("exponential kernel needs tau_g") from None
    if kind == "tabulated":
        if "csv" in block:
            return TabulatedKernel.from_csv(block["csv"])
        if "r" in block and "g" in block:
            return TabulatedKernel(block["r"], block["g"])
        raise ConfigurationError("tabulated kernel needs 'csv' or 'r'/'g' arrays")
    raise ConfigurationError(f"unknown kernel kind {kind!r}")


def params_from_dict(block: dict) -> MediumParams:
    try:
        return MediumParams(tau=float(block["tau"]), c=float(block["c"]), b=float(block["b"]),
                            k=float(block.get("k", 0.0)), alpha=float(block.get("alpha", 1.0)))
    except KeyError as exc:
        raise ConfigurationError(f"medium block missing {exc.args[0]!r}") from None
