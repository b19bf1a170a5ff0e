import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vnls_lab import darboux as db
from vnls_lab.errors import SingularGram
from vnls_lab.lax_core import FieldGrid, convergence_order, make_params, vnls_residual

finite = st.floats(-2, 2, allow_nan=False)
cplx = st.builds(complex, finite, finite)


def test_projector_examples():
    p = make_params(2, -1)
    assert np.allclose(db.projector(p, [1, 0]).P, [[1, 0], [0, 0]])
    assert np.allclose(db.projector(p, [1, 1]).P, 0.5 * np.ones((2, 2)))
    with pytest.raises(SingularGram):
        db.projector(make_params(2, 1), [1, 1])


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.sampled_from([1, -1]), st.lists(cplx, min_size=4, max_size=4))
def test_projector_identities(N, kappa, entries):
    p = make_params(N, kappa)
    q = np.array(entries[:N])
    G = db.gram_matrix(p, q[:, None])
    if np.linalg.norm(q) < 0.3 or abs(G[0, 0]) < 0.1 * np.linalg.norm(q) ** 2:
        return
    P = db.projector(p, q).P
    assert np.allclose(P @ P, P, atol=1e-10)
    assert np.allclose(p.Q @ P.conj().T @ p.Q, P, atol=1e-10)
    assert abs(np.trace(P) - 1) < 1e-10


@pytest.mark.parametrize("kappa", [1, -1])
@pytest.mark.parametrize("lam", [0.5 + 0.2j, -1.3 + 2.1j, 2.0])
def test_darboux_inverse(kappa, lam):
    p = make_params(3, kappa)
    pr = db.projector(p, np.array([1.0, 0.3j, 0.2]))
    mu = 0.4 + 1.1j
    assert np.allclose(db.darboux_matrix(pr, mu, lam) @ db.darboux_inverse(pr, mu, lam), np.eye(3))


def test_darboux_matrix_pole_guard():
    pr = db.projector(make_params(2, -1), [1, 0])
    with pytest.raises(ValueError):
        db.darboux_matrix(pr, 1j, 1j)
    with pytest.raises(ValueError):
        db.darboux_inverse(pr, 1j, -1j)


def test_pole_validation():
    with pytest.raises(ValueError):
        db.make_spec(2, -1, [(1.0, [1, 1])])
    with pytest.raises(ValueError):
        db.make_spec(2, -1, [(1j, [[1, 0], [0, 1]])])
    with pytest.raises(ValueError):
        db.make_spec(2, -1, [(1j, [1, 1]), (-1j, [1, 0])])
    with pytest.raises(ValueError):
        db.make_spec(3, -1, [(1j, [1, 1])])


def test_q_from_vacuum_value():
    spec = db.make_spec(2, -1, [(1j, [1, 1])])
    q = db.q_from_vacuum(spec, 0, 1.0, 0.0)[:, 0]
    assert np.allclose(q, [np.exp(-0.5), np.exp(0.5)], atol=1e-12)


@pytest.mark.parametrize("t", [0.0, 1.0, 5.0])
def test_single_soliton_peak_is_imaginary_part_doubled(t):
    spec = db.make_spec(2, -1, [(0.3 + 1.2j, [1, 1])])
    f = lambda x: db.dress_once(spec, 0, x, t)
    _, peak = db.peak_modulus(f, -20, 20, dx=1e-2)
    assert peak == pytest.approx(1.2, abs=1e-9)


def test_single_soliton_peak_location():
    spec = db.make_spec(2, -1, [(1j, [1, 1])])
    xp, peak = db.peak_modulus(lambda x: db.dress_once(spec, 0, x, 0.0), -5, 5, dx=1e-3)
    assert peak == pytest.approx(1.0, abs=1e-10)
    assert xp == pytest.approx(0.0, abs=1e-5)


@pytest.mark.parametrize("kappa", [1, -1])
def test_explicit_rank_one_matches_projector_form(kappa):
    C = [1, 0.3, 2.5] if kappa == 1 else [1, 0.3, 1]
    spec = db.make_spec(3, kappa, [(0.2 + 0.8j, C)])
    x = np.linspace(-3, 3, 41)
    assert np.allclose(db.explicit_rank_one(spec, 0, x, 0.4), db.dress_once(spec, 0, x, 0.4), atol=1e-12)


def test_reduced_polarization_gives_embedded_profile():
    x = np.linspace(-6, 6, 121)
    two = db.dress_once(db.make_spec(2, -1, [(1j, [1, 1])]), 0, x, 0.0)
    three = db.dress_once(db.make_spec(3, -1, [(1j, [1, 0, 1])]), 0, x, 0.0)
    assert np.max(np.abs(three[:, 1])) == 0
    assert np.allclose(np.abs(three[:, 0]), np.abs(two[:, 0]), atol=1e-12)


def test_single_soliton_solves_equation():
    spec = db.make_spec(3, -1, [(0.3 + 0.9j, [1, 0.5j, 1])])
    f = db.soliton_closure(spec, "single")
    errs = []
    for dx in (0.1, 0.05):
        g = FieldGrid.centered(f, (-6, 6), dx, 0.2, 0.5 * dx**2)
        errs.append(np.max(vnls_residual(g, -1)))
    assert errs[1] < errs[0] / 10
    assert errs[1] < 1e-3


TWO = [(1j + 0.5, [1, 1]), (1j - 0.5, [1, 1])]


def test_two_soliton_methods_agree():
    spec = db.make_spec(2, -1, TWO)
    x = np.linspace(-5, 5, 51)
    chain = db.chained_dressing(spec, x, 0.3)
    nsol = db.n_soliton(spec, x, 0.3)
    assert np.allclose(chain, nsol, atol=1e-10)
    assert db.residue_sum(spec, x, 0.3) < 1e-10


def test_two_soliton_asymptotic_peaks():
    spec = db.make_spec(2, -1, TWO)
    for t in (-20.0, 20.0):
        f = lambda x: db.n_soliton(spec, x, t)
        left = db.peak_modulus(f, -40, 0, dx=1e-3)
        right = db.peak_modulus(f, 0, 40, dx=1e-3)
        assert left[0] == pytest.approx(-20.805, abs=2e-3)
        assert right[0] == pytest.approx(20.805, abs=2e-3)
        assert left[1] == pytest.approx(1.0, abs=1e-6)
        assert right[1] == pytest.approx(1.0, abs=1e-6)


def test_pole_system_residual_small():
    spec = db.make_spec(3, -1, [(1j, [1, 0.2, 1]), (0.5 + 0.7j, [0.3, 1, 1])])
    ps, qs = db.multi_pole_p(spec, 0.4, 0.1, normalize=True, return_q=True)
    assert db.pole_system_residual(spec, ps, qs) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_laplace_det_matches_numpy(n):
    A = np.random.default_rng(n).normal(size=(n, n)) + 1j * np.random.default_rng(n + 9).normal(size=(n, n))
    ref = np.linalg.det(A)
    assert abs(db.laplace_det(A) - ref) < 1e-12 * max(1, abs(ref))


def test_cramer_matches_nsoliton():
    spec = db.make_spec(2, -1, TWO)
    ps, field = db.cramer_n_soliton(spec, 0.7, -0.2)
    assert np.allclose(field, db.n_soliton(spec, 0.7, -0.2), atol=1e-12)
    ps_ref = db.multi_pole_p(spec, 0.7, -0.2, normalize=True)
    assert np.allclose(ps, ps_ref, atol=1e-12)


def test_dress_nonzero_seed_matches_chain():
    spec = db.make_spec(2, -1, TWO)
    seed = db.soliton_closure(db.make_spec(2, -1, TWO[:1]), "single")
    second = db.make_spec(2, -1, TWO[1:])
    for x in (0.3, -1.0):
        u = db.dress_once(second, 0, x, 0.1, seed=seed, n_steps=400)
        assert np.allclose(u, db.chained_dressing(spec, x, 0.1), atol=1e-8)


def test_rank_two_pole_solves_equation():
    C = [[1, 0], [0.3j, 1], [1, 0.5]]
    spec = db.make_spec(3, -1, [(0.3 + 1j, C)])
    assert spec.poles[0].rank == 2
    f = db.soliton_closure(spec, "chain")
    steps = (0.1, 0.05, 0.025)
    errs = []
    for dx in steps:
        g = FieldGrid.centered(f, (-8, 8), dx, 0.2, 0.5 * dx**2)
        errs.append(np.max(vnls_residual(g, -1)))
    assert np.max(np.abs(f(np.linspace(-8, 8, 161), 0.2))) > 0.1
    assert convergence_order(steps, errs) >= 3.5
