import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vnls_lab import backlund as bt
from vnls_lab import darboux as db
from vnls_lab.errors import DegeneratePoint
from vnls_lab.lax_core import FieldGrid, build_U, convergence_order, make_params, vnls_residual

finite = st.floats(-3, 3, allow_nan=False)
cplx = st.builds(complex, finite, finite)

XLIM = (-8.0, 8.0)


def zero_field(ncomp):
    return lambda x, t: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(t)) + (ncomp,), complex)


def darboux_pair(dx, mu=0.3 + 1j, kappa=-1, branch=-1, C=(1, 1), nt=5, dt=1e-3, t_center=0.2):
    spec = db.make_spec(len(C), kappa, [(mu, list(C))])
    f = db.soliton_closure(spec, "single")
    u = FieldGrid.centered(zero_field(len(C) - 1), XLIM, dx, t_center, dt, nt)
    v = FieldGrid.centered(f, XLIM, dx, t_center, dt, nt)
    return bt.BtPair(u, v, mu, kappa, branch)


def test_eta_example():
    d, eta = bt.coefficients_from_modulus(1j, 1, 1.0)
    # (mu* - mu)^2 / 4 carries a signed zero, so numpy lands on -i sqrt(2); the sheet is fixed by the branch sign
    assert abs(eta) == pytest.approx(np.sqrt(2), abs=1e-15)
    assert eta**2 == pytest.approx(-2, abs=1e-14)


@pytest.mark.parametrize("kappa", [1, -1])
@pytest.mark.parametrize("w2", [0.1, 1.0, 3.7])
@pytest.mark.parametrize("mu", [1j, 0.3 + 1.2j, -0.5 + 0.4j])
def test_roots_of_quadratic(kappa, w2, mu):
    d_plus, eta = bt.coefficients_from_modulus(mu, kappa, w2, 1)
    d_minus, eta2 = bt.coefficients_from_modulus(mu, kappa, w2, -1)
    assert eta == eta2
    assert abs(d_plus * d_minus - w2 / kappa) < 1e-12
    assert bt.quadratic_residual(mu, kappa, w2, d_plus) < 1e-12
    assert bt.quadratic_residual(mu, kappa, w2, d_minus) < 1e-12
    # flipping eta exchanges the branches
    d_flip, _ = bt.coefficients_from_modulus(mu, kappa, w2, 1, eta=-eta)
    assert d_flip == pytest.approx(d_minus)


def test_bt_pair_validation():
    g = FieldGrid.centered(zero_field(1), XLIM, 0.1, 0.0, 1e-3, 5)
    h = FieldGrid.centered(zero_field(1), XLIM, 0.05, 0.0, 1e-3, 5)
    with pytest.raises(ValueError):
        bt.BtPair(g, h, 1j, -1)
    with pytest.raises(ValueError):
        bt.BtPair(g, g, 1.0, -1)
    with pytest.raises(ValueError):
        bt.BtPair(g, g, 1j, 2)


def test_zero_pair_is_degenerate():
    g = FieldGrid.centered(zero_field(1), XLIM, 0.1, 0.0, 1e-3, 5)
    pair = bt.BtPair(g, g, 1j, -1)
    with pytest.raises(DegeneratePoint):
        bt.max_residual(bt.bt_x_residual(pair))
    with pytest.raises(DegeneratePoint):
        bt.max_residual(bt.bt_t_residual(pair))
    with pytest.raises(DegeneratePoint):
        bt.bt_coefficients(pair, 0.0, 0.0)


def test_x_residual_converges_on_one_branch():
    steps = (0.1, 0.05)
    good = [bt.max_residual(bt.bt_x_residual(darboux_pair(dx))) for dx in steps]
    bad = [bt.max_residual(bt.bt_x_residual(darboux_pair(dx).flipped())) for dx in steps]
    assert convergence_order(steps, good) > 3.5
    assert min(bad) > 1e-3
    assert bt.best_branch(darboux_pair(0.1)) == -1


def test_t_residual_converges():
    dts = (0.02, 0.01)
    errs = [bt.max_residual(bt.bt_t_residual(darboux_pair(0.02, dt=dt, nt=3))) for dt in dts]
    assert convergence_order(dts, errs) > 1.8


def test_mismatched_pole_has_floor():
    pair = darboux_pair(0.05)
    wrong = bt.BtPair(pair.u, pair.u_tilde, 0.3 + 1.4j, -1, -1)
    assert bt.max_residual(bt.bt_x_residual(wrong)) > 1e-3


def test_time_shuffled_pair_has_floor():
    pair = darboux_pair(0.02, dt=0.05, nt=5, t_center=1.0)
    shuffled = pair.u_tilde.with_values(pair.u_tilde.values[::-1])
    bad = bt.BtPair(pair.u, shuffled, pair.mu, pair.kappa, pair.branch)
    assert bt.max_residual(bt.bt_t_residual(bad)) > 1e-3


@pytest.mark.parametrize("kappa, C", [(-1, (1, 1)), (1, (1, 2.5))])
def test_q_reconstruction(kappa, C):
    pair = darboux_pair(0.1, kappa=kappa, C=C, branch=1 if kappa == 1 else -1)
    for x in (-1.0, 0.0, 1.5):
        assert bt.q_reconstruction_check(pair, x, 0.2) < 1e-10
    assert bt.q_reconstruction_check(pair, 0.0, 0.2, d=1.0 + 0.5j) > 1e-3


def test_q_reconstruction_scales_quadratically():
    pair = darboux_pair(0.1)
    d = 0.7 + 0.2j
    base = bt.q_reconstruction_check(pair, 0.5, 0.2, d=d)
    doubled = bt.BtPair(pair.u, pair.u_tilde.with_values(2 * pair.u_tilde.values), pair.mu, -1, -1)
    assert bt.q_reconstruction_check(doubled, 0.5, 0.2, d=d) == pytest.approx(4 * base, rel=1e-12)


def test_grid_lookup_rejects_off_grid_points():
    pair = darboux_pair(0.1)
    with pytest.raises(ValueError):
        bt.bt_coefficients(pair, 0.05, 0.2)
    with pytest.raises(IndexError):
        bt.bt_coefficients(pair, 50.0, 0.2)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 4), st.sampled_from([1, -1]), st.lists(cplx, min_size=3, max_size=3), cplx)
def test_conjugation_identity(N, kappa, u, lam):
    p = make_params(N, kappa)
    assert bt.conjugation_identity_residual(p, np.array(u[: N - 1]), lam) < 1e-14


def test_conjugation_identity_needs_the_sign():
    p = make_params(3, -1)
    u = np.array([0.4 + 0.1j, -0.7j])
    lam = 0.3 - 1.1j
    wrong = -build_U(p, u, -lam).T - build_U(p, np.conj(u), lam)
    assert np.linalg.norm(wrong) > 0.1
    assert bt.conjugation_identity_residual(p, np.zeros(2), lam) < 1e-15


def test_conjugate_reflect():
    pair = darboux_pair(0.1)
    g = pair.u_tilde
    twice = bt.conjugate_reflect(bt.conjugate_reflect(g))
    assert np.array_equal(twice.values, g.values)
    assert not np.any(bt.conjugate_reflect(pair.u).values)
    with pytest.raises(ValueError):
        bt.conjugate_reflect(g, centered=True)


def test_reflected_soliton_solves_equation():
    f = db.soliton_closure(db.make_spec(2, -1, [(0.3 + 1j, [1, 1])]), "single")
    steps = (0.1, 0.05)
    errs = []
    for dx in steps:
        g = FieldGrid.centered(f, XLIM, dx, 0.0, 0.5 * dx**2)
        errs.append(np.max(vnls_residual(bt.conjugate_reflect(g, centered=True), -1)))
    assert convergence_order(steps, errs) > 3.5
