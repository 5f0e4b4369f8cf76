"""Pseudo-spectral time integration.

Linear part: exact per-mode exponentials of the generator (4x4 reduced,
3x3 plus a memory closure for the history grid). Nonlinear part: the
quadratic forcing in the ``w`` equation, evaluated with the 2/3 rule and
treated by exponential time differencing (Cox-Matthews ETDRK2/ETDRK4).

All stepping happens on half-spectra; :class:`SpectralState` is the working
representation and :class:`~jmgt.history.StateField` the public one.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import BlowUpError, ConfigurationError, JMGTError, UnsupportedRepresentationError
from .history import (Grid, History, HistoryBuffer, ReducedZ, StateField, advance_history,
                      kernel_weight_values, split_weights)
from .medium import ExponentialKernel, MediumParams, MemoryKernel
from .modes import reduced_generator

BLOWUP_FACTOR = 1e6


class Scheme(str, enum.Enum):
    EXACT_LINEAR = "ExactLinear"
    ETD2 = "ETD2"
    ETD4 = "ETD4"


@dataclass
class SolverConfig:
    """Time-stepping configuration.

    ``history_stride`` > 0 makes reduced runs keep a coarse Fourier-space
    history ``eta`` (age spacing ``history_stride * dt``) so energies that
    need ``eta`` can be evaluated; snapshots should then fall on multiples
    of the stride.
    """

    dt: float
    t_end: float
    scheme: Scheme | str = Scheme.ETD4
    dealias: bool = True
    snapshot_stride: int = 1
    nonlinearity_form: str = "def_F"
    history_stride: int = 0
    history_r_max: float | None = None
    keep_states: bool = False
    workers: int | None = None

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.t_end < 0:
            raise ConfigurationError("t_end must be non-negative")
        if self.snapshot_stride < 1:
            raise ConfigurationError("snapshot_stride must be at least 1")
        if self.nonlinearity_form not in ("def_F", "main_system"):
            raise ConfigurationError("nonlinearity_form must be 'def_F' or 'main_system'")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class SpectralState:
    """Half-spectrum view of a state; ``eta`` (optional) is a Fourier-space buffer."""

    grid: Grid
    psi: np.ndarray
    v: np.ndarray
    w: np.ndarray
    z: np.ndarray | None
    t: float = 0.0
    eta: HistoryBuffer | None = None

    @classmethod
    def from_state(cls, state: StateField, kernel=None, params=None) -> "SpectralState":
        g = state.grid
        if isinstance(state.memory, ReducedZ):
            return cls(g, g.forward(state.psi), g.forward(state.v), g.forward(state.w),
                       g.forward(state.memory.z), state.t)
        eta = state.memory.buffer.transformed(g)
        z = None
        if kernel is not None:
            vals, tail = kernel_weight_values(kernel, params, eta.r, "g")
            z = eta.integrate(vals, tail)
        return cls(g, g.forward(state.psi), g.forward(state.v), g.forward(state.w), z, state.t, eta)

    def real(self, name):
        return self.grid.inverse(getattr(self, name))


@dataclass
class Trajectory:
    """Snapshot times plus summary records (and optionally full states)."""

    times: list = field(default_factory=list)
    records: list = field(default_factory=list)
    states: list = field(default_factory=list)
    failed: bool = False
    failure: str | None = None
    failure_time: float | None = None

    def column(self, key):
        return np.array([r[key] for r in self.records])


# ---------------------------------------------------------------- nonlinearity


def _nonlinear_hat(grid: Grid, psi_h, v_h, w_h, params: MediumParams, form="def_F", dealias=True):
    if params.k == 0 and form == "main_system":
        return np.zeros_like(psi_h)
    if dealias:
        psi_h, v_h, w_h = grid.dealias(psi_h), grid.dealias(v_h), grid.dealias(w_h)
    dot = 0.0
    for gp, gv in zip(grid.grad(psi_h), grid.grad(v_h)):
        dot = dot + grid.inverse(gp) * grid.inverse(gv)
    vw = grid.inverse(v_h) * grid.inverse(w_h) if params.k != 0 else 0.0
    if form == "def_F":
        prod = (2.0 / params.tau) * (params.k * vw + dot)
    else:
        prod = (2.0 * params.k / params.tau) * (vw + dot)
    out = grid.forward(prod)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("non-finite nonlinear product")
    return grid.dealias(out) if dealias else out


def rhs_nonlinear(state: StateField, params: MediumParams, form: str = "def_F", dealias: bool = True):
    """``(2/tau)(k v w + grad psi . grad v)`` (or ``(2k/tau)(v w + ...)``) as a real field.

    Gradients are spectral, products pointwise, and the product is
    filtered with the 2/3 mask when ``dealias`` is set.
    """
    g = state.grid
    out = _nonlinear_hat(g, g.forward(state.psi), g.forward(state.v), g.forward(state.w),
                         params, form, dealias)
    return g.inverse(out)


# ---------------------------------------------------------------- phi functions


def phi_vectors(B: np.ndarray, h: float, order: int) -> np.ndarray:
    """``[phi_1(hB) e, ..., phi_order(hB) e]`` with ``e`` the third unit vector.

    Uses the exponential of the augmented matrix ``[[hB, e, 0], [0, J]]``
    (``J`` the nilpotent shift), whose top-right block holds the phi-vectors.
    No cancellation at small ``|hB|``. ``B`` has shape ``(M, d, d)``.
    Returns shape ``(M, d, order)``.
    """
    M, d, _ = B.shape
    aug = np.zeros((M, d + order, d + order))
    aug[:, :d, :d] = h * B
    aug[:, 2, d] = 1.0
    for j in range(order - 1):
        aug[:, d + j, d + j + 1] = 1.0
    E = sla.expm(aug)
    return E[:, :d, d:], E[:, :d, :d]


def _history_generator(params: MediumParams, kernel: MemoryKernel, rho_sq):
    """3x3 local part ``(psi, v, w)`` with the memory integral moved to forcing."""
    G = kernel.integral(params)
    cg2 = params.c**2 - G
    tau = params.tau
    B = np.zeros(rho_sq.shape + (3, 3))
    B[..., 0, 1] = 1.0
    B[..., 1, 2] = 1.0
    B[..., 2, 0] = -cg2 * rho_sq / tau
    B[..., 2, 1] = -params.b * rho_sq / tau
    B[..., 2, 2] = -1.0 / tau
    return B


def _taylor_inverse(nodes):
    """Matrix mapping samples at offsets ``nodes`` (units of h) to Taylor
    coefficients ``a_m h^m`` of the interpolant, ``f(s) = sum a_m s^m / m!``."""
    m = len(nodes)
    V = np.array([[x**p / math.factorial(p) for p in range(m)] for x in nodes], dtype=float)
    return np.linalg.inv(V)


class Stepper:
    """Precomputed propagators for a fixed grid, step and parameter set."""

    def __init__(self, grid: Grid, config: SolverConfig, params: MediumParams, kernel: MemoryKernel,
                 representation: str = "reduced"):
        self.grid, self.config, self.params, self.kernel = grid, config, params, kernel
        self.representation = representation
        h = config.dt
        vals, self.inv = grid.unique_rho_sq()
        self.rho_sq_unique = vals
        if representation == "reduced":
            if not isinstance(kernel, ExponentialKernel):
                raise UnsupportedRepresentationError("reduced memory needs an exponential kernel")
            A = reduced_generator(params, kernel, vals)
            phis, E = phi_vectors(A, h, 3)
            phis_half, E_half = phi_vectors(A, h / 2, 1)
            self.E = E
            self.E_half = E_half
            self.phi = phis            # (M, 4, 3)
            self.phi1_half = phis_half[:, :, 0]
        else:
            B = _history_generator(params, kernel, vals)
            phis, E = phi_vectors(B, h, 4)
            self.E = E
            self.phi = phis            # (M, 3, 4)
            self.coupling = vals / params.tau
            # quadrature vectors Q_i for the memory forcing, per startup order
            self.Q = {}
            for nodes in ((0, 1), (-1, 0, 1), (-2, -1, 0, 1)):
                Tinv = _taylor_inverse(nodes)
                Q = np.zeros((vals.size, 3, len(nodes)))
                for m in range(len(nodes)):
                    # int_0^h e^{(h-s)B} s^m/m! ds = h^{m+1} phi_{m+1}(hB); Taylor coefs carry h^-m
                    Q += h * phis[:, :, m, None] * Tinv[m][None, None, :]
                self.Q[len(nodes)] = Q
            # linear extrapolation of the nonlinear forcing through N_{k-1}, N_k
            T2 = _taylor_inverse((-1, 0))
            Qn = np.zeros((vals.size, 3, 2))
            for m in range(2):
                Qn += h * phis[:, :, m, None] * T2[m][None, None, :]
            self.Qn = Qn

    # -- helpers
    def _apply(self, Mtab, vecs):
        """``out[i] = sum_j Mtab[inv, i, j] vecs[j]`` for stacked half-spectra."""
        T = Mtab[self.inv]
        return np.einsum("...ij,j...->i...", T, vecs)

    def _col(self, tab):
        """Broadcast a per-unique-mode vector table ``(M, d)`` to ``(d, *spec)``."""
        return np.moveaxis(tab[self.inv], -1, 0)

    def nonlinear(self, u):
        if self.params.k == 0 and self.config.nonlinearity_form == "main_system":
            return np.zeros_like(u[0])
        return _nonlinear_hat(self.grid, u[0], u[1], u[2], self.params,
                              self.config.nonlinearity_form, self.config.dealias)

    def linear_only(self):
        return self.params.k == 0 and self.config.nonlinearity_form == "main_system" or \
            self.config.scheme is Scheme.EXACT_LINEAR

    # -- reduced
    def step_reduced(self, u):
        """One step on the stacked half-spectrum ``u = (psi, v, w, z)``."""
        cfg = self.config
        Eu = self._apply(self.E, u)
        if cfg.scheme is Scheme.EXACT_LINEAR:
            return Eu
        h = cfg.dt
        p1, p2, p3 = (self._col(self.phi[:, :, j]) for j in range(3))
        Nu = self.nonlinear(u)
        if cfg.scheme is Scheme.ETD2:
            a = Eu + h * p1 * Nu
            Na = self.nonlinear(a)
            return a + h * p2 * (Na - Nu)
        # Cox-Matthews ETDRK4
        Eh = self._apply(self.E_half, u)
        q = 0.5 * h * self._col(self.phi1_half)
        a = Eh + q * Nu
        Na = self.nonlinear(a)
        b = Eh + q * Na
        Nb = self.nonlinear(b)
        c = self._apply(self.E_half, a) + q * (2 * Nb - Nu)
        Nc = self.nonlinear(c)
        f1 = p1 - 3 * p2 + 4 * p3
        f2 = p2 - 2 * p3
        f3 = -p2 + 4 * p3
        return Eu + h * (f1 * Nu + 2 * f2 * (Na + Nb) + f3 * Nc)

    # -- history
    def step_history(self, state: StateField, cache: dict):
        """Exponential Adams-Moulton step on ``(psi, v, w)`` with the memory
        integral interpolated by a cubic through ``z_{k-2}..z_{k+1}``.

        ``z_{k+1}`` depends linearly on ``psi_{k+1}`` through the shifted
        history, which gives a scalar implicit solve per mode.
        """
        g = self.grid
        buf = state.memory.buffer
        h = self.config.dt
        u = np.stack([g.forward(state.psi), g.forward(state.v), g.forward(state.w)])
        zs = cache.setdefault("z", [])
        if not zs:
            zs.append(g.forward(_reduce(buf, self.kernel, self.params)))
        npts = min(len(zs) + 1, 4)
        Q = self.Q[npts]
        P = self._apply(self.E, u)
        cpl = self.coupling[self.inv]
        for i, zi in enumerate(zs[-(npts - 1):]):
            P = P - cpl * self._col(Q[:, :, i]) * zi
        if not self.linear_only():
            Nk = self.nonlinear(u)
            ns = cache.setdefault("N", [])
            ns.append(Nk)
            del ns[:-2]
            if len(ns) == 1:
                P = P + h * self._col(self.phi[:, :, 0]) * Nk
            else:
                Qn = self.Qn
                P = P + self._col(Qn[:, :, 0]) * ns[0] + self._col(Qn[:, :, 1]) * ns[1]
        # memory at t_{k+1}: z = S + W psi_{k+1}
        vals, tail = kernel_weight_values(self.kernel, self.params, buf.r, "g")
        front = None if buf.front is None else buf.front + 1
        c = split_weights(buf.n_r, buf.dr, vals, front, tail)
        W = float(c[1:].sum())
        idx = (buf.head + np.arange(buf.n_r)) % (buf.n_r + 1)
        S_real = np.tensordot(c[1:], buf.mu[idx], axes=(0, 0)) + (buf.psi - state.psi) * W
        S = g.forward(S_real)
        q1 = cpl * self._col(Q[:, :, npts - 1])
        z_new = (S + W * P[0]) / (1.0 + W * q1[0])
        u_new = P - q1 * z_new
        zs.append(z_new)
        del zs[:-3]
        psi_new = g.inverse(u_new[0])
        advance_history(state, (psi_new - state.psi) / h, h)
        state.psi, state.v, state.w = psi_new, g.inverse(u_new[1]), g.inverse(u_new[2])
        state.t += h
        return state


def _reduce(buf, kernel, params):
    vals, tail = kernel_weight_values(kernel, params, buf.r, "g")
    return buf.integrate(vals, tail)


def _check_config(state: StateField, config: SolverConfig, params: MediumParams):
    if config.scheme is Scheme.EXACT_LINEAR and params.k != 0:
        raise ConfigurationError("ExactLinear requires k = 0")
    if isinstance(state.memory, History):
        if abs(state.memory.buffer.dr - config.dt) > 1e-12 * config.dt:
            raise ConfigurationError("dt must equal the age-grid spacing for history states")


def step(state: StateField, config: SolverConfig, params: MediumParams, kernel: MemoryKernel,
         stepper: Stepper | None = None, cache: dict | None = None) -> StateField:
    """Advance ``state`` by one step ``config.dt`` and return it.

    Pass a persistent ``cache`` when calling repeatedly on a history state so
    the multistep memory interpolation keeps its full order.
    """
    _check_config(state, config, params)
    rep = state.representation
    if stepper is None:
        stepper = Stepper(state.grid, config, params, kernel, rep)
    g = state.grid
    if rep == "reduced":
        u = np.stack([g.forward(a) for a in (state.psi, state.v, state.w, state.memory.z)])
        u = stepper.step_reduced(u)
        _finite_or_raise(u, state.t + config.dt, None)
        state.psi, state.v, state.w = (g.inverse(u[i]) for i in range(3))
        state.memory.z = g.inverse(u[3])
        state.t += config.dt
        return state
    state = stepper.step_history(state, {} if cache is None else cache)
    if not state.is_finite():
        raise BlowUpError("non-finite state", time=state.t)
    return state


def _finite_or_raise(u, t, k):
    if not np.all(np.isfinite(u)):
        raise BlowUpError(f"non-finite state at t={t:.6g}", time=t, step=k)


def run(init: StateField, config: SolverConfig, params: MediumParams, kernel: MemoryKernel,
        diagnostics=None) -> Trajectory:
    """Integrate from ``init`` to ``config.t_end``.

    ``diagnostics`` is a callable (or list of callables) taking a
    :class:`SpectralState` and returning a dict merged into the snapshot
    record. Errors during stepping end the run with ``failed`` set; the
    partial trajectory is returned.
    """
    _check_config(init, config, params)
    hooks = [] if diagnostics is None else (list(diagnostics) if isinstance(diagnostics, (list, tuple))
                                           else [diagnostics])
    state = init.copy()
    g = state.grid
    rep = state.representation
    stepper = Stepper(g, config, params, kernel, rep)
    traj = Trajectory()
    sup0 = state.sup_norm()
    limit = BLOWUP_FACTOR * sup0 if sup0 > 0 else np.inf
    n_steps = config.n_steps

    track = None
    if rep == "reduced" and config.history_stride > 0:
        r_max = config.history_r_max or kernel.default_r_max()
        dr = config.history_stride * config.dt
        n_r = int(math.ceil(r_max / dr - 1e-9))
        track = HistoryBuffer(g.forward(state.psi), n_r, dr)

    def record(sp: SpectralState):
        rec = {"t": sp.t}
        for nm in ("psi", "v", "w"):
            rec[f"l2_{nm}"] = math.sqrt(g.norm_sq(getattr(sp, nm)))
        rec["l2_U"] = math.sqrt(g.norm_sq(sp.v + params.tau * sp.w))
        for hook in hooks:
            rec.update(hook(sp))
        traj.times.append(sp.t)
        traj.records.append(rec)

    if rep == "reduced":
        u = np.stack([g.forward(a) for a in (state.psi, state.v, state.w, state.memory.z)])

        def spectral(t):
            return SpectralState(g, u[0], u[1], u[2], u[3], t, track)

        record(spectral(state.t))
        if config.keep_states:
            traj.states.append(state.copy())
        t0 = state.t
        last_psi = u[0].copy()
        for k in range(1, n_steps + 1):
            t = t0 + k * config.dt
            try:
                u = stepper.step_reduced(u)
                _finite_or_raise(u, t, k)
                if not stepper.linear_only():
                    sup = max(np.max(np.abs(g.inverse(u[i]))) for i in range(3))
                    if sup > limit:
                        raise BlowUpError(f"sup norm {sup:.3e} exceeds blow-up threshold at t={t:.6g}",
                                          time=t, step=k)
            except JMGTError as exc:
                traj.failed, traj.failure, traj.failure_time = True, str(exc), t
                break
            if track is not None and k % config.history_stride == 0:
                track.advance(u[0] - last_psi)
                last_psi = u[0].copy()
            if k % config.snapshot_stride == 0 or k == n_steps:
                record(spectral(t))
                if config.keep_states:
                    traj.states.append(StateField(g, *(g.inverse(u[i]) for i in range(3)),
                                                  ReducedZ(g.inverse(u[3])), t))
        state = StateField(g, *(g.inverse(u[i]) for i in range(3)), ReducedZ(g.inverse(u[3])),
                           traj.times[-1])
        traj.final_state = state
        return traj

    cache = {}
    t0 = state.t
    record(SpectralState.from_state(state, kernel, params))
    if config.keep_states:
        traj.states.append(state.copy())
    for k in range(1, n_steps + 1):
        try:
            stepper.step_history(state, cache)
            state.t = t0 + k * config.dt
            if not state.is_finite():
                raise BlowUpError(f"non-finite state at t={state.t:.6g}", time=state.t, step=k)
            if state.sup_norm() > limit:
                raise BlowUpError(f"sup norm exceeds blow-up threshold at t={state.t:.6g}",
                                  time=state.t, step=k)
        except JMGTError as exc:
            traj.failed, traj.failure, traj.failure_time = True, str(exc), state.t
            break
        if k % config.snapshot_stride == 0 or k == n_steps:
            record(SpectralState.from_state(state, kernel, params))
            if config.keep_states:
                traj.states.append(state.copy())
    traj.final_state = state
    return traj
