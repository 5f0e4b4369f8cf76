import numpy as np
import pytest

from jmgt.errors import ConfigurationError, InsufficientDataError, InvalidKernelError, KernelDomainError
from jmgt.medium import (ExponentialKernel, MediumParams, Regime, TabulatedKernel, classify_regime,
                         effective_speed_sq, kernel_from_dict, params_from_dict, validate_assumptions)


@pytest.mark.parametrize("field", ["tau", "c", "b"])
@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
def test_params_reject_nonpositive(field, bad):
    kw = dict(tau=1.0, c=1.0, b=1.0)
    kw[field] = bad
    with pytest.raises(ConfigurationError):
        MediumParams(**kw)


def test_alpha_fixed_to_one():
    with pytest.raises(ConfigurationError):
        MediumParams(1.0, 1.0, 1.0, alpha=2.0)


def test_delta_and_chi():
    p = MediumParams(tau=0.5, c=2.0, b=3.0)
    assert p.delta == pytest.approx(1.0)
    assert p.chi == pytest.approx(1 - 2.0 / 3.0)


def test_exponential_kernel_closed_forms(critical):
    K = ExponentialKernel(m=0.3, tau_g=2.0)
    r = np.linspace(0, 5, 11)
    np.testing.assert_allclose(K.values(r, critical), 0.3 * np.exp(-r / 2))
    np.testing.assert_allclose(K.derivative(r, critical), -K.values(r, critical) / 2)
    np.testing.assert_allclose(K.second_derivative(r, critical), K.values(r, critical) / 4)
    assert K.integral(critical) == pytest.approx(0.6)
    assert K.numeric_integral(critical) == pytest.approx(K.integral(critical), rel=1e-12)
    assert K.tail_integral(3.0, critical) == pytest.approx(0.6 * np.exp(-1.5))


@pytest.mark.parametrize("m,tau_g", [(0.5, 0.0), (0.5, -1.0), (-0.1, 1.0)])
def test_exponential_kernel_invalid(m, tau_g):
    with pytest.raises(InvalidKernelError):
        ExponentialKernel(m=m, tau_g=tau_g)


def test_validate_exponential_pass(critical, kernel):
    rep = validate_assumptions(kernel, critical)
    assert rep.all_pass
    assert rep.zeta_best == pytest.approx(1.0)
    assert rep.c_g_sq == pytest.approx(0.5)


def test_validate_heavy_memory_fails_mass_condition(critical):
    rep = validate_assumptions(ExponentialKernel(m=2.0, tau_g=1.0), critical)
    assert not rep.G2.passed
    assert not rep.all_pass
    with pytest.raises(KernelDomainError):
        effective_speed_sq(ExponentialKernel(m=2.0, tau_g=1.0), critical)


def test_tabulated_matches_exponential(critical, kernel):
    r = np.linspace(0, 30, 3001)
    tab = TabulatedKernel(r, kernel.values(r, critical))
    assert tab.integral() == pytest.approx(kernel.integral(critical), rel=1e-5)
    rep = validate_assumptions(tab, critical)
    assert rep.all_pass
    assert rep.zeta_best == pytest.approx(1.0, rel=1e-2)
    x = np.array([0.123, 4.56])
    np.testing.assert_allclose(tab.values(x), kernel.values(x, critical), rtol=1e-6)


def test_tabulated_increasing_kernel_fails_decay(critical):
    r = np.linspace(0, 5, 51)
    rep = validate_assumptions(TabulatedKernel(r, 0.01 * (1 + r)), critical)
    assert not rep.G3.passed


def test_tabulated_csv_roundtrip(tmp_path, critical, kernel):
    r = np.linspace(0, 25, 501)
    path = tmp_path / "g.csv"
    np.savetxt(path, np.column_stack([r, kernel.values(r, critical)]), delimiter=",", header="r,g",
               comments="")
    tab = TabulatedKernel.from_csv(path)
    assert tab.r.size == 501


def test_tabulated_csv_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("r,g\n0,1\n1,oops\n")
    with pytest.raises(ConfigurationError):
        TabulatedKernel.from_csv(path)
    path.write_text("0,1\n1,0.5\n")
    with pytest.raises(InsufficientDataError):
        TabulatedKernel.from_csv(path)


def test_classify_regime(critical, subcritical):
    assert classify_regime(critical) == (Regime.CRITICAL, 0.0)
    reg, chi = classify_regime(subcritical)
    assert reg is Regime.SUBCRITICAL and chi == pytest.approx(1 / 3)
    reg, chi = classify_regime(MediumParams(1.0, 1.0, 0.5))
    assert reg is Regime.SUPERCRITICAL and chi == pytest.approx(-1.0)


def test_from_dict_helpers():
    p = params_from_dict({"tau": 1, "c": 1, "b": 2, "k": 0.5})
    assert p.k == 0.5
    K = kernel_from_dict({"kind": "exponential", "m": 0.2, "tau_g": 3})
    assert isinstance(K, ExponentialKernel) and K.tau_g == 3
    with pytest.raises(ConfigurationError):
        params_from_dict({"tau": 1})
    with pytest.raises(ConfigurationError):
        kernel_from_dict({"kind": "power"})
