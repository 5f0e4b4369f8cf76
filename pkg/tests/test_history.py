import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jmgt.errors import ConfigurationError, UnsupportedRepresentationError
from jmgt.history import (BandLimitedRandom, FourierMode, GaussianBump, Grid, HistoryBuffer, InitialData,
                          Zero, advance_history, init_state,
                          kernel_weight_values, load_snapshot, profile_from_dict, reduce_history,
                          save_snapshot, slice_csv_rows, split_weights)
from jmgt.medium import TabulatedKernel
from jmgt.oracle import riemann_l2_sq


@pytest.mark.parametrize("n", [1, 2, 3])
def test_grid_roundtrip_and_parseval(n, rng):
    g = Grid(n, 16, 5.0)
    f = rng.standard_normal(g.shape)
    fh = g.forward(f)
    np.testing.assert_allclose(g.inverse(fh), f, atol=1e-12)
    assert g.norm_sq(fh) == pytest.approx(riemann_l2_sq(f, g.dx), rel=1e-12)
    assert g.inner(fh, fh) == pytest.approx(g.norm_sq(fh), rel=1e-12)


def test_grid_rejects_bad_sizes():
    for args in [(4, 16, 1.0), (1, 12, 1.0), (1, 16, 0.0)]:
        with pytest.raises(ConfigurationError):
            Grid(*args)


def test_spectral_derivatives():
    g = Grid(2, 32, 2 * np.pi)
    X, Y = g.coords()
    f = np.sin(X) * np.cos(2 * Y)
    fh = g.forward(f)
    dx, dy = (g.inverse(d) for d in g.grad(fh))
    np.testing.assert_allclose(dx, np.cos(X) * np.cos(2 * Y), atol=1e-12)
    np.testing.assert_allclose(dy, -2 * np.sin(X) * np.sin(2 * Y), atol=1e-12)
    np.testing.assert_allclose(g.inverse(g.laplacian(fh)), -5 * f, atol=1e-11)
    assert g.norm_sq(fh, 1) == pytest.approx(5 * g.norm_sq(fh))


def test_unique_rho_sq_inverts():
    g = Grid(3, 8, 3.0)
    vals, inv = g.unique_rho_sq()
    np.testing.assert_allclose(vals[inv], g.ksq, atol=1e-10)


def test_split_weights_with_jump():
    # eta = r below the front at r = 1, then constant 1; h = 1 on [0, 2]
    dr, n_r = 0.1, 20
    c = split_weights(n_r, dr, np.ones(n_r + 1), front=10)
    eta = np.minimum(np.arange(n_r + 1) * dr, 1.0)
    eta[11:] = 5.0  # right of the jump the buffer holds the new constant
    assert c @ eta == pytest.approx(0.5 + 5.0 * 1.0, rel=1e-12)
    full = split_weights(n_r, dr, np.ones(n_r + 1), None, tail=3.0)
    assert full.sum() == pytest.approx(2.0 + 3.0)


def test_buffer_shift_and_front():
    buf = HistoryBuffer(np.array([2.0]), n_r=5, dr=0.5)
    np.testing.assert_allclose(buf.eta_all()[:, 0], [0, 2, 2, 2, 2, 2])
    buf.advance(np.array([1.0]))  # psi: 2 -> 3
    np.testing.assert_allclose(buf.eta_all()[:, 0], [0, 1, 3, 3, 3, 3])
    assert buf.front == 1
    cp = buf.copy()
    cp.advance(np.array([1.0]))
    assert buf.front == 1 and cp.front == 2


def test_buffer_integral_of_exponential(critical, kernel):
    # eta = 1 on all ages beyond 0 with the exact tail: int g eta = G, fourth-order in dr
    errs = []
    for dr in (0.2, 0.1, 0.05):
        buf = HistoryBuffer(np.ones(1), n_r=int(round(25 / dr)), dr=dr)
        vals, tail = kernel_weight_values(kernel, critical, buf.r, "g")
        errs.append(abs(buf.integrate(vals, tail)[0] - kernel.integral(critical)))
    assert errs[-1] < 1e-7
    assert np.log2(errs[0] / errs[1]) == pytest.approx(4, abs=0.3)
    assert np.log2(errs[1] / errs[2]) == pytest.approx(4, abs=0.3)


def test_kernel_weight_values(critical, kernel):
    r = np.linspace(0, 2, 5)
    np.testing.assert_allclose(kernel_weight_values(kernel, critical, r, "-g'")[0], 0.5 * np.exp(-r))
    np.testing.assert_allclose(kernel_weight_values(kernel, critical, r, "g''")[0], 0.5 * np.exp(-r))
    with pytest.raises(ValueError):
        kernel_weight_values(kernel, critical, r, "bad")


def test_init_state_reduced_and_history(critical, kernel):
    g = Grid(1, 32, 10.0)
    data = InitialData(GaussianBump(1.0, 1.0), Zero(), Zero())
    red = init_state(g, data, kernel, critical, "reduced")
    np.testing.assert_allclose(red.memory.z, 0.5 * red.psi)
    hist = init_state(g, data, kernel, critical, "history", dt=0.1)
    np.testing.assert_allclose(reduce_history(hist, kernel, critical), red.memory.z, rtol=1e-5)
    with pytest.raises(ConfigurationError):
        init_state(g, data, kernel, critical, "history")
    with pytest.raises(UnsupportedRepresentationError):
        init_state(g, data, TabulatedKernel([0, 1, 2], [0.3, 0.2, 0.1]), critical, "reduced")
    with pytest.raises(ConfigurationError):
        advance_history(hist, np.zeros(32), 0.2)
    with pytest.raises(UnsupportedRepresentationError):
        reduce_history(red, kernel, critical)


def test_profiles():
    g = Grid(2, 32, 2 * np.pi)
    f = FourierMode(2.0, (1, 2)).sample(g)
    assert np.max(np.abs(f)) == pytest.approx(2.0)
    b = GaussianBump(1.0, 0.5, mean_free=True).sample(g)
    assert abs(b.mean()) < 1e-14
    r1 = BandLimitedRandom(0.3, seed=4).sample(g)
    r2 = profile_from_dict({"kind": "random", "amplitude": 0.3, "seed": 4}).sample(g)
    np.testing.assert_allclose(r1, r2)
    assert np.max(np.abs(r1)) == pytest.approx(0.3)
    with pytest.raises(ConfigurationError):
        profile_from_dict({"kind": "spiral"})


@pytest.mark.parametrize("rep", ["reduced", "history"])
def test_snapshot_roundtrip(tmp_path, critical, kernel, rep):
    g = Grid(2, 8, 3.0)
    data = InitialData(GaussianBump(1.0, 0.7), FourierMode(0.3, (1, 1)), Zero())
    s = init_state(g, data, kernel, critical, rep, dt=0.5, r_max=2.0)
    s.t = 1.25
    path = tmp_path / "s.snap"
    save_snapshot(s, path)
    head, fields = load_snapshot(path)
    assert head["t"] == 1.25 and head["N"] == 8 and head["n"] == 2
    np.testing.assert_array_equal(fields["psi"], s.psi)
    if rep == "history":
        assert head["N_r"] == 4 and len(head["names"]) == 3 + 5
        np.testing.assert_array_equal(fields["eta1"], s.psi)
    header, rows = slice_csv_rows(s)
    assert header[:4] == ["x", "psi", "v", "w"] and len(rows) == 8


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.snap"
    p.write_bytes(b"\0" * 64)
    with pytest.raises(ConfigurationError):
        load_snapshot(p)


@settings(max_examples=30, deadline=None)
@given(incs=st.lists(st.floats(-1, 1), min_size=1, max_size=12))
def test_buffer_matches_naive_history(incs):
    # eta(r) = psi(t) - psi(t - r), with psi(s) = 0 before the start
    psi0 = 0.3
    buf = HistoryBuffer(np.array([psi0]), n_r=6, dr=1.0)
    path = [psi0]
    for d in incs:
        buf.advance(np.array([d]))
        path.append(path[-1] + d)
    now = path[-1]
    for j in range(7):
        past = path[-1 - j] if j < len(path) else 0.0
        assert buf.eta(j)[0] == pytest.approx(now - past, abs=1e-12)
