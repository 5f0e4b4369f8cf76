"""Periodic grids, solution state and the memory (history) representation.

The state is ``(psi, v, w)`` plus either the reduced memory field
``z = int g eta dr`` or the history ``eta(x, r)`` on a uniform age grid.

History storage trick: along characteristics ``eta(t+h, r+h) = eta(t, r) +
psi(t+h) - psi(t)``, so ``mu = eta - psi`` is a pure shift register. The
buffer stores ``mu`` in a ring and only writes one slice per step.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, UnsupportedRepresentationError
from .medium import ExponentialKernel, MediumParams, MemoryKernel
from .modes import gregory_weights

# ---------------------------------------------------------------- grid


class Grid:
    """Uniform periodic grid on ``[0, L)^n`` with real-FFT bookkeeping.

    Parameters
    ----------
    n : int
        Spatial dimension, 1 to 3.
    N : int
        Points per dimension, a power of two, at least 8.
    L : float
        Box length.
    workers : int, optional
        Threads handed to ``scipy.fft``.
    """

    def __init__(self, n: int, N: int, L: float, workers: int | None = None):
        if n not in (1, 2, 3):
            raise ConfigurationError("grid dimension must be 1, 2 or 3")
        if N < 8 or N & (N - 1):
            raise ConfigurationError("N must be a power of two and at least 8")
        if not L > 0:
            raise ConfigurationError("L must be positive")
        self.n, self.N, self.L = int(n), int(N), float(L)
        self.workers = workers
        self.shape = (self.N,) * self.n
        self.dx = self.L / self.N
        kfull = 2 * np.pi * np.fft.fftfreq(self.N, d=self.dx)
        khalf = 2 * np.pi * np.fft.rfftfreq(self.N, d=self.dx)
        ks = []
        for ax in range(self.n):
            base = khalf if ax == self.n - 1 else kfull
            shp = [1] * self.n
            shp[ax] = base.size
            ks.append(base.reshape(shp))
        self.k = ks
        self.spec_shape = tuple(self.N if ax < self.n - 1 else self.N // 2 + 1 for ax in range(self.n))
        self.ksq = sum(np.broadcast_to(kk**2, self.spec_shape) for kk in ks)
        # odd derivatives: drop the Nyquist wavenumber to keep fields real
        nyq = np.pi * self.N / self.L
        self.kd = [np.where(np.isclose(np.abs(kk), nyq), 0.0, kk) for kk in ks]
        kcut = (2.0 / 3.0) * nyq
        mask = np.ones(self.spec_shape, dtype=bool)
        for kk in ks:
            mask &= np.broadcast_to(np.abs(kk) <= kcut + 1e-12, self.spec_shape)
        self.dealias_mask = mask
        # Parseval weights on the half spectrum
        mult = np.full(self.N // 2 + 1, 2.0)
        mult[0] = 1.0
        mult[-1] = 1.0
        shp = [1] * self.n
        shp[-1] = mult.size
        self.parseval = np.broadcast_to(mult.reshape(shp) * self.L**self.n / float(self.N) ** (2 * self.n),
                                        self.spec_shape)
        self.rho = np.sqrt(self.ksq)
        self._unique = None

    def __repr__(self):
        return f"Grid(n={self.n}, N={self.N}, L={self.L})"

    # transforms
    def forward(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, axes=tuple(range(-self.n, 0)), workers=self.workers)

    def inverse(self, fh: np.ndarray) -> np.ndarray:
        return sfft.irfftn(fh, s=self.shape, axes=tuple(range(-self.n, 0)), workers=self.workers)

    def dealias(self, fh: np.ndarray) -> np.ndarray:
        return fh * self.dealias_mask

    def coords(self):
        x = np.arange(self.N) * self.dx
        return np.meshgrid(*([x] * self.n), indexing="ij")

    def unique_rho_sq(self):
        """Unique ``|xi|^2`` values and the inverse index (cached)."""
        if self._unique is None:
            vals, inv = np.unique(np.round(self.ksq, 12), return_inverse=True)
            self._unique = (vals, inv.reshape(self.spec_shape))
        return self._unique

    # quadratic forms
    def inner(self, ah: np.ndarray, bh: np.ndarray, mult=None) -> float:
        """``int a b dx`` from half-spectra, optionally with a spectral multiplier."""
        prod = (ah * np.conj(bh)).real * self.parseval
        if mult is not None:
            prod = prod * mult
        return float(prod.sum())

    def norm_sq(self, fh: np.ndarray, power: float = 0.0) -> float:
        """``||grad^power f||^2`` (``power`` may be fractional)."""
        w = self.parseval * (self.ksq ** power if power else 1.0)
        return float((np.abs(fh) ** 2 * w).sum())

    def grad(self, fh: np.ndarray):
        return [1j * kk * fh for kk in self.kd]

    def laplacian(self, fh: np.ndarray) -> np.ndarray:
        return -self.ksq * fh


# ---------------------------------------------------------------- history


def split_weights(n_r: int, dr: float, hvals: np.ndarray, front: int | None, tail: float = 0.0):
    """Quadrature coefficients ``c`` with ``int_0^inf h(r) eta(r) dr ~ sum_j c_j eta_j``.

    ``eta`` may jump at node ``front`` (the stored value there is the left
    limit, and ``eta`` is constant to the right of it). Both sides are
    integrated with Gregory-corrected trapezoid rules. ``tail`` is
    ``int_{r_max}^inf h``, assigned to the last (constant) value.
    """
    c = np.zeros(n_r + 1)
    if front is None or front >= n_r:
        c[:] = gregory_weights(n_r, dr) * hvals
        c[-1] += tail
        return c
    f = int(front)
    if f > 0:
        c[: f + 1] = gregory_weights(f, dr) * hvals[: f + 1]
    right = float(np.dot(gregory_weights(n_r - f, dr), hvals[f:])) + tail
    c[f + 1] += right
    return c


class HistoryBuffer:
    """Ring buffer for ``eta`` on ages ``r_j = j dr``, ``j = 0..n_r``.

    Stores ``mu_j = eta_j - psi`` so each advance writes a single slice.
    ``front`` tracks the age at which ``eta`` jumps (``r = t`` for data
    started from ``eta(t=0) = psi_0``); ``None`` means no known jump.
    """

    def __init__(self, psi0: np.ndarray, n_r: int, dr: float, eta=None, front: int | None = 0):
        self.n_r = int(n_r)
        self.dr = float(dr)
        self.psi = np.array(psi0, copy=True)
        self.mu = np.zeros((self.n_r + 1,) + self.psi.shape, dtype=self.psi.dtype)
        self.head = 0
        if eta is None:
            # eta(r=0) = 0, eta(r>0) = psi0
            self.mu[0] = -self.psi
        else:
            eta = np.asarray(eta)
            if eta.shape != self.mu.shape:
                raise ConfigurationError("eta shape does not match the age grid")
            self.mu[:] = eta - self.psi
            front = None
        self.front = front

    @property
    def r(self):
        return self.dr * np.arange(self.n_r + 1)

    @property
    def r_max(self):
        return self.dr * self.n_r

    def _slot(self, j):
        return (self.head + j) % (self.n_r + 1)

    def eta(self, j: int) -> np.ndarray:
        return self.psi + self.mu[self._slot(j)]

    def eta_all(self) -> np.ndarray:
        idx = (self.head + np.arange(self.n_r + 1)) % (self.n_r + 1)
        return self.psi[None] + self.mu[idx]

    def advance(self, increment: np.ndarray):
        """Shift one age cell and add ``increment = psi(t+dr) - psi(t)``."""
        self.psi = self.psi + increment
        self.head = (self.head - 1) % (self.n_r + 1)
        self.mu[self.head] = -self.psi
        if self.front is not None:
            self.front += 1

    def weights(self, hvals, tail=0.0):
        return split_weights(self.n_r, self.dr, hvals, self.front, tail)

    def integrate(self, hvals, tail=0.0) -> np.ndarray:
        """``int h(r) eta(r) dr`` (linear in eta)."""
        c = self.weights(hvals, tail)
        idx = (self.head + np.arange(self.n_r + 1)) % (self.n_r + 1)
        return self.psi * c.sum() + np.tensordot(c, self.mu[idx], axes=(0, 0))

    def copy(self) -> "HistoryBuffer":
        out = HistoryBuffer.__new__(HistoryBuffer)
        out.n_r, out.dr, out.head, out.front = self.n_r, self.dr, self.head, self.front
        out.psi = self.psi.copy()
        out.mu = self.mu.copy()
        return out

    def transformed(self, grid: Grid) -> "HistoryBuffer":
        """Same buffer with every slice mapped to Fourier space."""
        out = HistoryBuffer.__new__(HistoryBuffer)
        out.n_r, out.dr, out.head, out.front = self.n_r, self.dr, self.head, self.front
        out.psi = grid.forward(self.psi)
        out.mu = grid.forward(self.mu)
        return out


def kernel_weight_values(kernel: MemoryKernel, params: MediumParams, r: np.ndarray, which="g"):
    """Kernel-derived weight ``g``, ``-g'`` or ``g''`` at ages ``r`` and its tail integral."""
    if which == "g":
        vals = kernel.values(r, params)
    elif which == "-g'":
        vals = -kernel.derivative(r, params)
    elif which == "g''":
        vals = kernel.second_derivative(r, params)
    else:
        raise ValueError(which)
    tail = 0.0
    if isinstance(kernel, ExponentialKernel):
        tail = float(vals[-1]) * kernel.tau_g
    return vals, tail


# ---------------------------------------------------------------- state


@dataclass
class ReducedZ:
    z: np.ndarray


@dataclass
class History:
    buffer: HistoryBuffer


@dataclass
class StateField:
    """Solution snapshot in real space."""

    grid: Grid
    psi: np.ndarray
    v: np.ndarray
    w: np.ndarray
    memory: ReducedZ | History
    t: float = 0.0

    @property
    def representation(self):
        return "history" if isinstance(self.memory, History) else "reduced"

    def is_finite(self) -> bool:
        arrs = [self.psi, self.v, self.w]
        arrs.append(self.memory.z if isinstance(self.memory, ReducedZ) else self.memory.buffer.mu)
        return all(np.all(np.isfinite(a)) for a in arrs)

    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(a)) for a in (self.psi, self.v, self.w)))

    def copy(self) -> "StateField":
        mem = (ReducedZ(self.memory.z.copy()) if isinstance(self.memory, ReducedZ)
               else History(self.memory.buffer.copy()))
        return StateField(self.grid, self.psi.copy(), self.v.copy(), self.w.copy(), mem, self.t)


# ---------------------------------------------------------------- initial data


class Profile:
    def sample(self, grid: Grid) -> np.ndarray:
        raise NotImplementedError

    def as_dict(self):
        return {"kind": type(self).__name__}


@dataclass
class Zero(Profile):
    def sample(self, grid):
        return np.zeros(grid.shape)


@dataclass
class GaussianBump(Profile):
    """``A exp(-|x - x0|^2 / (2 width^2))`` with periodic distance; centred by default."""

    amplitude: float = 1.0
    width: float = 1.0
    center: tuple | None = None
    mean_free: bool = False

    def sample(self, grid):
        X = grid.coords()
        c = self.center if self.center is not None else (grid.L / 2,) * grid.n
        r2 = 0.0
        for x, x0 in zip(X, c):
            d = (x - x0 + grid.L / 2) % grid.L - grid.L / 2
            r2 = r2 + d**2
        f = self.amplitude * np.exp(-r2 / (2 * self.width**2))
        if self.mean_free:
            f = f - f.mean()
        return f

    def as_dict(self):
        return {"kind": "gaussian", "amplitude": self.amplitude, "width": self.width,
                "center": self.center, "mean_free": self.mean_free}


@dataclass
class FourierMode(Profile):
    """``A sin(2 pi m.x / L)`` (or cos) for integer mode vector ``m``."""

    amplitude: float = 1.0
    mode: tuple = (1,)
    phase: str = "sin"

    def sample(self, grid):
        X = grid.coords()
        m = tuple(self.mode) + (0,) * (grid.n - len(self.mode))
        arg = sum(2 * np.pi * mi * x / grid.L for mi, x in zip(m, X))
        return self.amplitude * (np.sin(arg) if self.phase == "sin" else np.cos(arg))

    def as_dict(self):
        return {"kind": "mode", "amplitude": self.amplitude, "mode": list(self.mode), "phase": self.phase}


@dataclass
class BandLimitedRandom(Profile):
    """Random field with spectrum ``(1 + |m|^2)^(-slope/2)`` on integer modes ``|m| <= m_max``.

    The field is rescaled so that its maximum modulus equals ``amplitude``.
    """

    amplitude: float = 1.0
    m_max: float = 4.0
    seed: int = 0
    slope: float = 2.0
    mean_free: bool = True

    def sample(self, grid):
        rng = np.random.default_rng(self.seed)
        m_index = np.sqrt(grid.ksq) * grid.L / (2 * np.pi)
        spec = (1 + m_index**2) ** (-self.slope / 2) * (m_index <= self.m_max)
        if self.mean_free:
            spec = spec * (m_index > 0)
        coef = spec * (rng.standard_normal(grid.spec_shape) + 1j * rng.standard_normal(grid.spec_shape))
        f = grid.inverse(coef)
        peak = np.max(np.abs(f))
        return f * (self.amplitude / peak) if peak > 0 else f

    def as_dict(self):
        return {"kind": "random", "amplitude": self.amplitude, "m_max": self.m_max,
                "seed": self.seed, "slope": self.slope, "mean_free": self.mean_free}


@dataclass
class InitialData:
    psi0: Profile = field(default_factory=Zero)
    psi1: Profile = field(default_factory=Zero)
    psi2: Profile = field(default_factory=Zero)
    scale: float = 1.0

    def sample(self, grid):
        return tuple(self.scale * p.sample(grid) for p in (self.psi0, self.psi1, self.psi2))


def profile_from_dict(block) -> Profile:
    if block is None:
        return Zero()
    kind = str(block.get("kind", "zero")).lower()
    if kind == "zero":
        return Zero()
    if kind == "gaussian":
        return GaussianBump(float(block.get("amplitude", 1.0)), float(block.get("width", 1.0)),
                            tuple(block["center"]) if block.get("center") is not None else None,
                            bool(block.get("mean_free", False)))
    if kind == "mode":
        return FourierMode(float(block.get("amplitude", 1.0)), tuple(block.get("mode", (1,))),
                           block.get("phase", "sin"))
    if kind == "random":
        return BandLimitedRandom(float(block.get("amplitude", 1.0)), float(block.get("m_max", 4.0)),
                                 int(block.get("seed", 0)), float(block.get("slope", 2.0)),
                                 bool(block.get("mean_free", True)))
    raise ConfigurationError(f"unknown profile kind {kind!r}")


def age_grid(dr: float, r_max: float):
    n_r = int(np.ceil(r_max / dr - 1e-9))
    return n_r, dr


def init_state(grid: Grid, data: InitialData, kernel: MemoryKernel, params: MediumParams,
               representation: str = "reduced", dt: float | None = None,
               r_max: float | None = None) -> StateField:
    """Initial state ``(psi0, psi1, psi2)`` with memory started from ``eta(t=0) = psi0``.

    Reduced: ``z = (c^2 - c_g^2) psi0`` (exponential kernels only).
    History: ``eta(r=0) = 0`` and ``eta(r) = psi0`` for ``r > 0`` on ages
    spaced by ``dt`` up to ``r_max`` (default ``25 tau_g``).
    """
    psi0, psi1, psi2 = data.sample(grid)
    if representation == "reduced":
        if not isinstance(kernel, ExponentialKernel):
            raise UnsupportedRepresentationError("reduced memory needs an exponential kernel")
        z = kernel.integral(params) * psi0
        return StateField(grid, psi0, psi1, psi2, ReducedZ(z))
    if representation == "history":
        if dt is None or not dt > 0:
            raise ConfigurationError("history representation needs the time step (age spacing)")
        r_max = kernel.default_r_max() if r_max is None else r_max
        n_r, dr = age_grid(dt, r_max)
        return StateField(grid, psi0, psi1, psi2, History(HistoryBuffer(psi0, n_r, dr)))
    raise UnsupportedRepresentationError(f"unknown representation {representation!r}")


def advance_history(state: StateField, v_field: np.ndarray, dt: float) -> StateField:
    """Advance ``eta`` by one age cell: shift, then add ``dt * v_field``.

    ``v_field`` is the step-averaged velocity, so ``dt * v_field`` is the
    increment of ``psi`` over the step; with it the update is exact along
    characteristics. ``eta(., 0) = 0`` holds afterwards.
    """
    if not isinstance(state.memory, History):
        raise UnsupportedRepresentationError("advance_history needs a history state")
    buf = state.memory.buffer
    if abs(dt - buf.dr) > 1e-12 * buf.dr:
        raise ConfigurationError(f"time step {dt} differs from age spacing {buf.dr}")
    buf.advance(dt * np.asarray(v_field))
    return state


def reduce_history(state: StateField, kernel: MemoryKernel, params: MediumParams) -> np.ndarray:
    """``z = int g eta dr``: Gregory-corrected trapezoid on the age grid plus
    the exponential tail ``g(r_max) tau_g eta(r_max)``.
    """
    if not isinstance(state.memory, History):
        raise UnsupportedRepresentationError("reduce_history needs a history state")
    buf = state.memory.buffer
    vals, tail = kernel_weight_values(kernel, params, buf.r, "g")
    return buf.integrate(vals, tail)


# ---------------------------------------------------------------- serialisation

MAGIC = b"JMGTSNAP"
HEADER = struct.Struct("<8sIIIdIdI")  # magic, version, n, N, L, N_r, t, n_fields


def save_snapshot(state: StateField, path) -> None:
    """Flat binary snapshot.

    Layout (little-endian): ``magic[8] version:u32 n:u32 N:u32 L:f64 N_r:u32
    t:f64 n_fields:u32``, then ``n_fields`` names of 8 ASCII bytes each, then
    the fields as float64 in the listed order. Reduced states hold
    ``psi, v, w, z``; history states hold ``psi, v, w`` followed by
    ``eta`` at ages ``0..N_r`` (``N_r + 1`` fields).
    """
    g = state.grid
    if isinstance(state.memory, ReducedZ):
        names = ["psi", "v", "w", "z"]
        arrays = [state.psi, state.v, state.w, state.memory.z]
        n_r = 0
    else:
        buf = state.memory.buffer
        eta = buf.eta_all()
        names = ["psi", "v", "w"] + [f"eta{j}" for j in range(buf.n_r + 1)]
        arrays = [state.psi, state.v, state.w] + list(eta)
        n_r = buf.n_r
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, 1, g.n, g.N, g.L, n_r, state.t, len(names)))
        for nm in names:
            fh.write(nm.encode("ascii")[:8].ljust(8, b"\0"))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_snapshot(path, dr: float | None = None):
    """Read :func:`save_snapshot` output; returns ``(header dict, {name: array})``."""
    raw = Path(path).read_bytes()
    magic, version, n, N, L, n_r, t, nf = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ConfigurationError(f"{path}: not a snapshot file")
    off = HEADER.size
    names = []
    for _ in range(nf):
        names.append(raw[off:off + 8].rstrip(b"\0").decode("ascii"))
        off += 8
    size = N**n
    fields = {}
    for nm in names:
        fields[nm] = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape((N,) * n).copy()
        off += 8 * size
    return {"version": version, "n": n, "N": N, "L": L, "N_r": n_r, "t": t, "names": names}, fields


def slice_csv_rows(state: StateField):
    """Header and rows ``x, psi, v, w[, z]`` along the first axis through the origin."""
    g = state.grid
    idx = (slice(None),) + (0,) * (g.n - 1)
    x = np.arange(g.N) * g.dx
    cols = [x, state.psi[idx], state.v[idx], state.w[idx]]
    header = ["x", "psi", "v", "w"]
    if isinstance(state.memory, ReducedZ):
        cols.append(state.memory.z[idx])
        header.append("z")
    return header, np.column_stack(cols).tolist()
