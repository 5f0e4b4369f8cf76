import numpy as np
import pytest
import scipy.linalg as sla

from jmgt.errors import BlowUpError, ConfigurationError
from jmgt.history import FourierMode, GaussianBump, Grid, InitialData, ReducedZ, StateField, Zero, init_state
from jmgt.medium import ExponentialKernel, MediumParams
from jmgt.modes import batched_propagators
from jmgt.oracle import fd_nonlinearity
from jmgt.solver import Scheme, SolverConfig, phi_vectors, rhs_nonlinear, run, step


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(dt=0.1, t_end=1.0, snapshot_stride=0)
    with pytest.raises(ConfigurationError):
        SolverConfig(dt=0.1, t_end=1.0, nonlinearity_form="cubic")
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, t_end=1.0, scheme="RK4")
    assert SolverConfig(dt=0.1, t_end=1.0).n_steps == 10


def test_exact_linear_requires_zero_k(kernel):
    p = MediumParams(1.0, 1.0, 1.0, k=1.0)
    g = Grid(1, 16, 4.0)
    s = init_state(g, InitialData(GaussianBump()), kernel, p)
    with pytest.raises(ConfigurationError):
        run(s, SolverConfig(dt=0.1, t_end=1.0, scheme="ExactLinear"), p, kernel)


def test_phi_vectors_scalar_case():
    # 3x3 diagonal B so the third component sees the scalar phi functions of b
    b, h = -2.0, 0.3
    B = np.diag([0.0, 0.0, b])[None]
    phi, E = phi_vectors(B, h, 3)
    z = h * b
    phi1 = (np.exp(z) - 1) / z
    phi2 = (np.exp(z) - 1 - z) / z**2
    phi3 = (np.exp(z) - 1 - z - z * z / 2) / z**3
    np.testing.assert_allclose(phi[0, 2], [phi1, phi2, phi3], rtol=1e-12)
    np.testing.assert_allclose(E[0], sla.expm(h * B[0]), rtol=1e-13)


def test_linear_single_mode_is_exact(critical, kernel):
    g = Grid(1, 16, 2 * np.pi)
    data = InitialData(FourierMode(1.0, (2,), "cos"), FourierMode(0.3, (2,), "cos"), Zero())
    s = init_state(g, data, kernel, critical)
    tr = run(s, SolverConfig(dt=0.25, t_end=5.0, scheme="ExactLinear", snapshot_stride=4), critical, kernel)
    x0 = np.array([1.0, 0.3, 0.0, 0.5])
    ref = batched_propagators(critical, kernel, np.array([4.0]), 5.0)[0] @ x0
    f = tr.final_state
    x = g.coords()[0]
    np.testing.assert_allclose(f.psi, ref[0] * np.cos(2 * x), atol=1e-12)
    np.testing.assert_allclose(f.memory.z, ref[3] * np.cos(2 * x), atol=1e-12)
    assert len(tr.times) == 6 and tr.times[-1] == pytest.approx(5.0)


def test_step_matches_run(critical, kernel):
    g = Grid(1, 32, 10.0)
    data = InitialData(GaussianBump(1.0, 1.0), Zero(), Zero())
    cfg = SolverConfig(dt=0.1, t_end=0.3, scheme="ExactLinear")
    s = init_state(g, data, kernel, critical)
    for _ in range(3):
        s = step(s, cfg, critical, kernel)
    ref = run(init_state(g, data, kernel, critical), cfg, critical, kernel).final_state
    np.testing.assert_allclose(s.psi, ref.psi, atol=1e-13)
    assert s.t == pytest.approx(0.3)


def test_spectral_nonlinearity_matches_differences():
    p = MediumParams(1.0, 1.0, 1.0, k=0.7)
    g = Grid(1, 128, 2 * np.pi)
    x = g.coords()[0]
    st = StateField(g, np.sin(x), np.cos(2 * x), np.sin(3 * x), ReducedZ(np.zeros(128)))
    for form in ("def_F", "main_system"):
        spec = rhs_nonlinear(st, p, form, dealias=False)
        fd = fd_nonlinearity(st.psi, st.v, st.w, g.dx, p.tau, p.k, form, order=6)
        np.testing.assert_allclose(spec, fd, atol=1e-7)


def test_default_form_is_nonlinear_at_zero_k():
    p = MediumParams(1.0, 1.0, 1.0, k=0.0)
    g = Grid(1, 64, 2 * np.pi)
    x = g.coords()[0]
    st = StateField(g, np.sin(x), np.sin(x), np.zeros(64), ReducedZ(np.zeros(64)))
    assert np.max(np.abs(rhs_nonlinear(st, p, "def_F"))) > 0.5
    assert np.max(np.abs(rhs_nonlinear(st, p, "main_system"))) == 0


def _final_psi(rep, scheme, dt):
    p = MediumParams(tau=0.5, c=1.0, b=0.5, k=1.0)
    K = ExponentialKernel(m=0.5, tau_g=1.0)
    g = Grid(1, 64, 20.0)
    data = InitialData(GaussianBump(0.3, 1.5), GaussianBump(0.1, 1.5), GaussianBump(0.0, 1.0))
    cfg = SolverConfig(dt=dt, t_end=2.0, scheme=scheme, snapshot_stride=1000)
    return run(init_state(g, data, K, p, rep, dt=dt), cfg, p, K).final_state.psi


@pytest.mark.parametrize("rep,scheme,order", [("reduced", "ETD2", 2), ("reduced", "ETD4", 4),
                                              ("history", "ETD4", 2)])
def test_convergence_order(rep, scheme, order):
    ref = _final_psi(rep, scheme, 0.1 / 16)
    e = [np.linalg.norm(_final_psi(rep, scheme, dt) - ref) for dt in (0.1, 0.05)]
    assert np.log2(e[0] / e[1]) == pytest.approx(order, abs=0.35)


def test_history_matches_reduced_short(critical, kernel):
    g = Grid(1, 128, 40.0)
    data = InitialData(GaussianBump(1.0, 1.0), GaussianBump(0.5, 1.5), GaussianBump(-0.2, 1.0))
    cfg = SolverConfig(dt=0.01, t_end=2.0, scheme="ExactLinear", snapshot_stride=100)
    a = run(init_state(g, data, kernel, critical), cfg, critical, kernel).final_state
    b = run(init_state(g, data, kernel, critical, "history", dt=0.01), cfg, critical, kernel).final_state
    num = sum(np.sum((getattr(a, f) - getattr(b, f)) ** 2) for f in ("psi", "v", "w"))
    den = sum(np.sum(getattr(a, f) ** 2) for f in ("psi", "v", "w"))
    assert np.sqrt(num / den) < 1e-6


def test_history_dt_must_match_age_grid(critical, kernel):
    g = Grid(1, 16, 4.0)
    s = init_state(g, InitialData(GaussianBump()), kernel, critical, "history", dt=0.1)
    with pytest.raises(ConfigurationError):
        run(s, SolverConfig(dt=0.05, t_end=1.0, scheme="ExactLinear"), critical, kernel)


def test_blowup_reported_with_partial_trajectory(kernel):
    p = MediumParams(1.0, 1.0, 1.0, k=1.0)
    g = Grid(2, 32, 10.0)
    bump = GaussianBump(20.0, 1.0)
    s = init_state(g, InitialData(bump, bump, bump), kernel, p)
    tr = run(s, SolverConfig(dt=0.01, t_end=5.0, scheme=Scheme.ETD4, snapshot_stride=1), p, kernel)
    assert tr.failed and "blow-up" in tr.failure
    assert 0 < tr.failure_time < 5.0
    assert len(tr.records) >= 1 and tr.times[-1] < tr.failure_time
    s2 = init_state(g, InitialData(bump, bump, bump), kernel, p)
    cfg = SolverConfig(dt=0.01, t_end=5.0, scheme="ETD4")
    with pytest.raises(BlowUpError):
        for _ in range(500):
            s2 = step(s2, cfg, p, kernel)
            if s2.sup_norm() > 1e6 * 20:
                raise BlowUpError("grew past the threshold", time=s2.t)


def test_history_tracking_in_reduced_runs(critical, kernel):
    g = Grid(1, 32, 10.0)
    data = InitialData(GaussianBump(1.0, 1.0), Zero(), Zero())
    cfg = SolverConfig(dt=0.05, t_end=1.0, scheme="ExactLinear", snapshot_stride=4, history_stride=4,
                       history_r_max=5.0)
    seen = []
    run(init_state(g, data, kernel, critical), cfg, critical, kernel,
        diagnostics=lambda sp: seen.append(sp.eta is not None) or {})
    assert all(seen) and len(seen) == 6
