import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jmgt.errors import DegenerateModeError, UnsupportedRepresentationError
from jmgt.medium import ExponentialKernel, MediumParams, TabulatedKernel
from jmgt.modes import (HistoryGrid, Stability, abscissa_sweep, assemble_mode_system, batched_propagators,
                        characteristic_quartic, eigenvalues, gregory_weights, history_physical_eigenvalues,
                        no_memory_cubic, propagate_mode, reduced_generator, routh_hurwitz,
                        routh_hurwitz_no_memory, sweep_csv_rows)

# high-precision roots (mpmath, 30 digits) of the quartic at tau = c = b = rho = 1, m = 0.5, tau_g = 1
QUARTIC_ROOTS = np.array([-1.40921245679934563531, -0.32814024896098203989,
                          -0.13132364711983616240 + 1.03151528635603199402j,
                          -0.13132364711983616240 - 1.03151528635603199402j])
# same oracle at rho = 1e-2 and rho = 1e2
ABSCISSA_LOW = -5.00024997497811718562e-05
ABSCISSA_HIGH = -4.99825077460833906431e-05


def _sorted(z):
    return np.sort_complex(np.asarray(z))


def test_quartic_coefficients(critical, kernel):
    np.testing.assert_allclose(characteristic_quartic(critical, kernel, 1.0), [1, 2, 2, 2, 0.5])


def test_generator_eigenvalues_match_quartic(critical, kernel):
    lam = np.linalg.eigvals(reduced_generator(critical, kernel, np.array([1.0]))[0])
    np.testing.assert_allclose(_sorted(lam), _sorted(QUARTIC_ROOTS), atol=1e-12)


@pytest.mark.parametrize("rho,expected", [(1e-2, ABSCISSA_LOW), (1e2, ABSCISSA_HIGH)])
def test_abscissa_asymptotic_values(critical, kernel, rho, expected):
    lam = eigenvalues(assemble_mode_system(critical, kernel, rho * rho))
    assert lam.real.max() == pytest.approx(expected, rel=1e-8)


def test_generator_is_batched(critical, kernel):
    A = reduced_generator(critical, kernel, np.ones((3, 2)))
    assert A.shape == (3, 2, 4, 4)


def test_reduced_needs_exponential(critical):
    tab = TabulatedKernel([0, 1, 2], [0.3, 0.2, 0.1])
    with pytest.raises(UnsupportedRepresentationError):
        reduced_generator(critical, tab, 1.0)


def test_gregory_weights_exact_on_cubics():
    h = 0.1
    w = gregory_weights(10, h)
    x = np.arange(11) * h
    for p in range(4):
        assert w @ x**p == pytest.approx(1.0**(p + 1) / (p + 1), rel=1e-12)


def test_history_grid_reproduces_physical_roots(critical, kernel):
    ms = assemble_mode_system(critical, kernel, 1.0, HistoryGrid(200, 25.0))
    lam, res = history_physical_eigenvalues(ms)
    top = lam[np.argsort(-lam.real)][:3]
    np.testing.assert_allclose(_sorted(top), _sorted(QUARTIC_ROOTS[1:]), atol=2e-4)
    assert np.all(res < 1e-10)


def test_routh_hurwitz_examples():
    # s^3 + s^2 + 2s + 3 has a right half-plane pair
    assert routh_hurwitz([1, 1, 2, 3])[0] is Stability.UNSTABLE
    assert routh_hurwitz([1, 1, 1, 1])[0] is Stability.MARGINAL
    assert routh_hurwitz([1, 3, 3, 1])[0] is Stability.STABLE


def test_no_memory_marginal_roots_exact():
    p = MediumParams(1.0, 1.0, 1.0)
    np.testing.assert_allclose(no_memory_cubic(p, 1.0), [1, 1, 1, 1])
    roots = np.roots(no_memory_cubic(p, 1.0))
    np.testing.assert_allclose(_sorted(roots), _sorted([-1, 1j, -1j]), atol=1e-12)
    assert routh_hurwitz_no_memory(p, 1.0) is Stability.MARGINAL


def test_no_memory_zero_frequency():
    with pytest.raises(DegenerateModeError):
        routh_hurwitz_no_memory(MediumParams(1.0, 1.0, 1.0), 0.0)


@settings(max_examples=60, deadline=None)
@given(tau=st.floats(0.05, 5), c=st.floats(0.2, 3), ratio=st.floats(0.3, 3), rho=st.floats(1e-2, 1e2))
def test_dichotomy_matches_roots(tau, c, ratio, rho):
    if abs(ratio - 1) < 1e-3:
        ratio = 1.0
    p = MediumParams(tau, c, ratio * tau * c * c)
    cls = routh_hurwitz_no_memory(p, rho * rho)
    lead = np.roots(no_memory_cubic(p, rho * rho)).real.max()
    scale = max(1.0, np.abs(np.roots(no_memory_cubic(p, rho * rho))).max())
    if ratio > 1:
        assert cls is Stability.STABLE and lead < 0
    elif ratio < 1:
        assert cls is Stability.UNSTABLE and lead > 0
    else:
        assert cls is Stability.MARGINAL and abs(lead) < 1e-8 * scale


@settings(max_examples=40, deadline=None)
@given(m=st.floats(0.05, 0.95), tau_g=st.floats(0.1, 1.0), rho=st.floats(1e-3, 1e3))
def test_memory_stabilizes_critical_modes(m, tau_g, rho):
    p = MediumParams(1.0, 1.0, 1.0)
    K = ExponentialKernel(m, tau_g)
    lam = np.linalg.eigvals(reduced_generator(p, K, np.array([rho * rho]))[0])
    assert lam.real.max() < 0


def test_sweep_fits_regularity_loss(critical, kernel):
    curve = abscissa_sweep(critical, kernel, np.logspace(-3, 3, 40))
    assert np.all(curve.abscissa < 0)
    assert curve.low_coef == pytest.approx(0.5, rel=1e-3)
    assert curve.high_coef == pytest.approx(0.5, rel=1e-2)
    header, rows = sweep_csv_rows(curve)
    assert header[0] == "rho" and header[-1] == "abscissa" and len(rows) == 40


def test_sweep_rejects_bad_grid(critical, kernel):
    with pytest.raises(ValueError):
        abscissa_sweep(critical, kernel, [1.0, 0.5])


def test_propagators_agree(critical, kernel):
    ms = assemble_mode_system(critical, kernel, 2.0)
    x0 = np.array([1.0, 0.0, 0.0, kernel.integral(critical)])
    a = propagate_mode(ms, x0, 3.0)
    b = batched_propagators(critical, kernel, np.array([2.0]), 3.0)[0] @ x0
    np.testing.assert_allclose(a, b, rtol=1e-12)
    np.testing.assert_allclose(propagate_mode(ms, x0, 0.0), x0)
