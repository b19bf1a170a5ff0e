from dataclasses import replace

import numpy as np
import pytest

from vnls_lab import darboux as db
from vnls_lab import glm
from vnls_lab.errors import DispersionMismatch, NonDecaying
from vnls_lab.lax_core import convergence_order, make_params


def sign_kernel(lam=1j, lamhat=1j, b=1.0, bhat=1.0):
    p = make_params(2, -1)
    return glm.kernel_from_exponents(glm.sign_bare(p), [[b]], [[bhat]], [[lam]], [[lamhat]]), p


def test_validate_kernel_sign_example():
    spec, p = sign_kernel()
    assert spec.mu[0, 0] == 1j
    assert spec.muhat[0, 0] == 1j
    assert abs(spec.Lam[0, 0]) == 0
    assert abs(spec.Lamhat[0, 0]) == 0


def test_validate_kernel_rejects_real_exponent():
    with pytest.raises(NonDecaying):
        sign_kernel(lam=1.0, lamhat=1.0)


def test_validate_kernel_rejects_wrong_dispersion():
    spec, p = sign_kernel(lam=0.5 + 1j, lamhat=0.2 + 1j)
    with pytest.raises(DispersionMismatch):
        glm.validate_kernel(replace(spec, Lam=spec.Lam + 1), glm.sign_bare(p))


def test_validate_kernel_rejects_wrong_direction():
    spec, p = sign_kernel()
    with pytest.raises(DispersionMismatch):
        glm.validate_kernel(replace(spec, mu=spec.mu + 0.5), glm.sign_bare(p))


def test_validate_kernel_size_mismatch():
    spec, _ = sign_kernel()
    with pytest.raises(ValueError):
        glm.validate_kernel(spec, glm.sign_bare(make_params(3, -1)))


def test_bare_constants_nonzero():
    with pytest.raises(ValueError):
        glm.BareOperatorSpec(np.array([1.0, 0.0]), -0.5)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_matched_bare_ratio(N):
    p = make_params(N, -1)
    bare = glm.matched_bare(p)
    assert bare.alpha_consts[0] == 1
    assert np.allclose(bare.alpha_consts[1:], -(1 - p.a) / (1 + p.a))


def test_zero_bhat_gives_zero_P():
    spec, _ = sign_kernel(bhat=0.0)
    P, _ = glm.build_pmatrices(spec, 0.3, 0.1)
    assert not np.any(P)
    sol = glm.assemble_kernels(spec, 0.3, 0.1)
    X = spec.b * np.exp(1j * spec.Lam * 0.1 + 1j * spec.lam * 0.3)
    assert np.allclose(sol.L, -X)
    assert np.allclose(sol.matrix(0.8)[1:, 0], 0)


def test_zero_b_gives_bare_Lhat():
    spec, _ = sign_kernel(b=0.0)
    Lij, Lhat = glm.solve_Lhat(spec, 0.3, 0.1)
    Xh = spec.bhat * np.exp(1j * spec.Lamhat * 0.1 + 1j * spec.lamhat * 0.3)
    assert np.allclose(Lhat[0, 0], -Xh[0])
    assert not np.any(Lij)


def test_zero_kernel_gives_zero_field():
    spec, _ = sign_kernel(b=0.0, bhat=0.0)
    assert not np.any(glm.glm_field(spec, np.linspace(-2, 2, 5), 0.0))


def test_pmatrices_decay():
    spec = glm.kernel_from_pole(make_params(2, -1), 0.3 + 1j, [1, 1])
    P0, Ph0 = glm.build_pmatrices(spec, 0.0, 0.0)
    P, Ph = glm.build_pmatrices(spec, 10.0, 0.0)
    rate = (spec.lamhat + spec.mu)[0, 0].imag
    rate_hat = (spec.lam + spec.muhat)[0, 0].imag
    assert rate > 0 and rate_hat > 0
    assert np.abs(P).max() == pytest.approx(np.abs(P0).max() * np.exp(-10 * rate), rel=1e-10)
    assert np.abs(Ph).max() == pytest.approx(np.abs(Ph0).max() * np.exp(-10 * rate_hat), rel=1e-10)


@pytest.mark.parametrize("N, C", [(2, [1, 1]), (3, [1, 0.5j, 1]), (4, [0.2, 1, -0.4, 1])])
@pytest.mark.parametrize("x", [-3.0, 0.0, 2.5])
def test_one_term_closed_form(N, C, x):
    spec = glm.kernel_from_pole(make_params(N, -1), 0.3 + 1j, C)
    sol = glm.assemble_kernels(spec, x, 0.4)
    L, Lh, _, _ = glm.one_term_closed_form(spec, x, 0.4)
    assert np.allclose(L, sol.L[:, 0], atol=1e-12)
    assert np.allclose(Lh, sol.Lhat[:, :, 0].sum(1), atol=1e-12)
    for z in (x, x + 1.0):
        assert glm.glm_residual(sol, z) < 1e-10


def test_closed_form_needs_single_term():
    p = make_params(2, -1)
    spec = glm.kernel_from_exponents(glm.sign_bare(p), [[1, 0.5]], [[1, 0.3]], [[1j, 2j]], [[1j, 1.5j]])
    with pytest.raises(ValueError):
        glm.one_term_closed_form(spec, 0.0, 0.0)


@pytest.mark.parametrize("x", [-1.0, 0.0, 1.3])
def test_two_term_glm_residual(x):
    p = make_params(3, -1)
    bare = glm.matched_bare(p)
    lam = np.array([[0.2 + 1j, 0.5j + 0.7], [0.2 + 1j, 0.5j + 0.7]]) * (1 - p.a) / 2
    lamhat = -np.conj(lam) * (1 + p.a) / (1 - p.a)
    spec = glm.kernel_from_exponents(bare, [[1, 0.3], [0.5j, 0.2]], [[0.4, 0.1], [0.2, -0.3]], lam, lamhat)
    sol = glm.assemble_kernels(spec, x, 0.2)
    for z in (x, x + 0.5, x + 2.0):
        assert glm.glm_residual(sol, z) < 1e-10


@pytest.mark.parametrize("N, C", [(2, [1, 1]), (3, [1, 0.5j, 1])])
def test_glm_matches_darboux(N, C):
    mu = 0.3 + 1j
    spec = glm.kernel_from_pole(make_params(N, -1), mu, C)
    ref = db.soliton_closure(db.make_spec(N, -1, [(mu, C)]), "single")
    xs = np.linspace(-10, 10, 21)
    c = glm.calibrate_constant(spec, ref, xs)
    assert c == pytest.approx(-2.0, abs=1e-8)
    u = glm.glm_field(spec, xs, 0.0)
    assert np.allclose(np.linalg.norm(u, axis=-1), np.linalg.norm(ref(xs, 0.0), axis=-1), atol=1e-8)


def test_kernel_from_pole_rejects():
    with pytest.raises(ValueError):
        glm.kernel_from_pole(make_params(2, 1), 1j, [1, 1])
    with pytest.raises(ValueError):
        glm.kernel_from_pole(make_params(2, -1), -1j, [1, 1])


def test_kernel_time_evolution_converges():
    p = make_params(2, -1)
    spec = glm.kernel_from_pole(p, 0.3 + 1j, [1, 1])
    hs = (0.02, 0.01, 0.005)
    evo, trace = zip(*(glm.kernel_time_residual(spec, 0.3, 0.9, 0.2, h, p.a) for h in hs))
    assert convergence_order(hs, evo) > 1.8
    assert convergence_order(hs, trace) > 1.8


def test_zero_kernel_time_residual():
    spec, p = sign_kernel(b=0.0, bhat=0.0)
    evo, trace = glm.kernel_time_residual(spec, 0.3, 0.9, 0.2, 0.01, p.a)
    assert evo == 0 and trace == 0


def test_forcing_zero_potential_breaks_trace_condition():
    p = make_params(2, -1)
    spec = glm.kernel_from_pole(p, 0.3 + 1j, [1, 1])
    _, trace = glm.kernel_time_residual(spec, 0.3, 0.9, 0.2, 0.005, p.a, M_hat=lambda x: np.zeros((2, 2)))
    assert trace > 0.1


def test_potential_from_fields_block_structure():
    M = glm.potential_from_fields([1.0 + 1j], [2.0], -0.5)
    assert M[0, 0] == pytest.approx(1.5 * 2)
    assert M[0, 1] == -2
    assert M[1, 0] == pytest.approx(0.75 * 2)
    assert M[1, 1] == pytest.approx(0.5 * 2)
