"""Gelfand-Levitan-Marchenko inversion for separable exponential kernels.

Component indices run over the ``m = N - 1`` field components and term
indices over the ``n`` spectral terms; kernel data arrays have shape
``(m, n)``.  The input kernel is

    F = sum_j f_j e_{1j} + sum_j fhat_j e_{j1},
    f_j(x, z)    = sum_a b_j^a    exp(i Lam_j^a t    + i lam_j^a x    + i mu_j^a z),
    fhat_j(x, z) = sum_a bhat_j^a exp(i Lamhat_j^a t + i lamhat_j^a x + i muhat_j^a z),

and every integral over ``[x, inf)`` is done in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import DispersionMismatch, NonDecaying, SingularM
from .lax_core import LaxParams

COND_MAX = 1e12
CONSTRAINT_TOL = 1e-10


@dataclass(frozen=True)
class BareOperatorSpec:
    alpha_consts: np.ndarray  # (N,)
    a: float

    def __post_init__(self):
        al = np.asarray(self.alpha_consts, dtype=float)
        if np.any(al == 0):
            raise ValueError("bare operator constants must be nonzero")
        object.__setattr__(self, "alpha_consts", al)

    @property
    def N(self) -> int:
        return len(self.alpha_consts)


def matched_bare(p: LaxParams) -> BareOperatorSpec:
    """Bare operator whose direction constraints reproduce the Darboux exponents.

    ``alpha_j / alpha_1 = -(1 - a) / (1 + a)`` for every ``j > 1``.
    """
    ratio = -(1 - p.a) / (1 + p.a)
    return BareOperatorSpec(np.array([1.0] + [ratio] * (p.N - 1)), p.a)


def sign_bare(p: LaxParams) -> BareOperatorSpec:
    """``diag(1, -1, ..., -1)``: exponents satisfy ``mu = lam`` and ``muhat = lamhat``."""
    return BareOperatorSpec(np.array([1.0] + [-1.0] * (p.N - 1)), p.a)


@dataclass(frozen=True)
class KernelSpec:
    b: np.ndarray
    bhat: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    lamhat: np.ndarray
    muhat: np.ndarray
    Lam: Optional[np.ndarray] = None
    Lamhat: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("b", "bhat", "lam", "mu", "lamhat", "muhat", "Lam", "Lamhat"):
            v = getattr(self, name)
            if v is not None:
                v = np.atleast_2d(np.asarray(v, dtype=complex))
                object.__setattr__(self, name, v)
        shape = self.b.shape
        for name in ("bhat", "lam", "mu", "lamhat", "muhat"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def n(self) -> int:
        return self.b.shape[1]


def kernel_from_exponents(bare: BareOperatorSpec, b, bhat, lam, lamhat) -> KernelSpec:
    """Fill in ``mu``, ``muhat``, ``Lam`` and ``Lamhat`` from the linear constraints."""
    al = bare.alpha_consts
    aj = al[1:, None]
    lam = np.atleast_2d(np.asarray(lam, complex))
    lamhat = np.atleast_2d(np.asarray(lamhat, complex))
    mu = -al[0] * lam / aj
    muhat = -aj * lamhat / al[0]
    spec = KernelSpec(b, bhat, lam, mu, lamhat, muhat)
    return validate_kernel(spec, bare)


def validate_kernel(spec: KernelSpec, bare: BareOperatorSpec) -> KernelSpec:
    """Check direction, dispersion and decay; return the spec with ``Lam``/``Lamhat`` recomputed."""
    if bare.N != spec.m + 1:
        raise ValueError(f"bare operator has size {bare.N}, kernel has {spec.m} components")
    al = bare.alpha_consts
    aj = al[1:, None]
    dir1 = np.abs(al[0] * spec.lam + aj * spec.mu)
    dir2 = np.abs(aj * spec.lamhat + al[0] * spec.muhat)
    scale = 1 + np.abs(spec.lam) + np.abs(spec.lamhat)
    if np.any(dir1 > CONSTRAINT_TOL * scale) or np.any(dir2 > CONSTRAINT_TOL * scale):
        raise DispersionMismatch("exponents violate the direction constraints of the bare operator")
    Lam = (spec.lam**2 - spec.mu**2) / bare.a
    Lamhat = (spec.lamhat**2 - spec.muhat**2) / bare.a
    for given, derived, name in ((spec.Lam, Lam, "Lam"), (spec.Lamhat, Lamhat, "Lamhat")):
        if given is not None and np.any(np.abs(given - derived) > CONSTRAINT_TOL * (1 + np.abs(derived))):
            raise DispersionMismatch(f"{name} does not satisfy a*Lam = lam^2 - mu^2")
    # Im(lamhat_i^g + mu_i^b) > 0 within a component; Im(lam_j^a + muhat_i^g) > 0 across components.
    d1 = spec.lamhat[:, None, :] + spec.mu[:, :, None]
    d2 = spec.lam[None, :, :, None] + spec.muhat[:, None, None, :]
    if np.any(d1.imag <= 0) or np.any(d2.imag <= 0):
        raise NonDecaying("kernel integrals over [x, inf) do not converge")
    return replace(spec, Lam=Lam, Lamhat=Lamhat)


def kernel_from_pole(p: LaxParams, mu_D: complex, C) -> KernelSpec:
    """One-term kernel whose reconstruction (with c = -2) is the focusing Darboux 1-soliton.

    Valid for ``kappa = -1`` and ``Im mu_D > 0``; use together with ``matched_bare(p)``.
    """
    if p.kappa != -1:
        raise ValueError("the pole-to-kernel map is defined for the focusing case")
    mu_D = complex(mu_D)
    if mu_D.imag <= 0:
        raise ValueError("the pole must lie in the upper half plane")
    C = np.asarray(C, complex).ravel()
    a = p.a
    A = mu_D.imag
    b = -1j * A * C[:-1] / C[-1]
    bhat = -(1 - a**2) * np.conj(b)
    ones = np.ones(p.N - 1)
    lam = (1 - a) * mu_D / 2 * ones
    lamhat = -(1 + a) * np.conj(mu_D) / 2 * ones
    return kernel_from_exponents(matched_bare(p), b[:, None], bhat[:, None], lam[:, None], lamhat[:, None])


def _X(spec, x, t):
    return spec.b * np.exp(1j * spec.Lam * t + 1j * spec.lam * x)


def _Xhat(spec, x, t):
    return spec.bhat * np.exp(1j * spec.Lamhat * t + 1j * spec.lamhat * x)


def build_pmatrices(spec: KernelSpec, x: float, t: float):
    """Return ``(P, Phat)`` with ``P[i, b, g]`` and ``Phat[i, g, j, a]``."""
    lm = spec.lamhat[:, None, :] + spec.mu[:, :, None]  # [i, b, g]
    P = -spec.bhat[:, None, :] * np.exp(1j * spec.Lamhat[:, None, :] * t + 1j * lm * x) / (1j * lm)
    lmh = spec.lam[None, None, :, :] + spec.muhat[:, :, None, None]  # [i, g, j, a]
    Phat = (
        -spec.b[None, None]
        * np.exp(1j * spec.Lam[None, None] * t + 1j * lmh * x)
        / (1j * lmh)
    )
    return P, Phat


def m_matrix(spec: KernelSpec, P, Phat) -> np.ndarray:
    """``M[(i, b), (j, a)] = delta - sum_g P[i, b, g] Phat[i, g, j, a]`` flattened to ``(mn, mn)``."""
    m, n = spec.m, spec.n
    PP = np.einsum("ibg,igja->ibja", P, Phat)
    M = np.eye(m * n, dtype=complex) - PP.reshape(m * n, m * n)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise SingularM(f"linear system is singular (condition {cond:.3g})")
    return M


def solve_L(spec: KernelSpec, x: float, t: float) -> np.ndarray:
    """Coefficients ``L[j, a]`` of ``K_1j(x, z) = sum_a L_j^a exp(i mu_j^a z)``."""
    P, Phat = build_pmatrices(spec, x, t)
    M = m_matrix(spec, P, Phat)
    X = _X(spec, x, t).ravel()
    return np.linalg.solve(M.T, -X).reshape(spec.m, spec.n)


def solve_Lhat(spec: KernelSpec, x: float, t: float):
    """Return ``(Lij, Lhat)``.

    ``Lij[i, l, a]`` gives ``K_il = sum_a Lij[i, l, a] exp(i mu_l^a z)`` and
    ``Lhat[i, l, g]`` gives ``K_i1 = sum_{l, g} Lhat[i, l, g] exp(i muhat_l^g z)``.
    """
    m, n = spec.m, spec.n
    P, Phat = build_pmatrices(spec, x, t)
    M = m_matrix(spec, P, Phat)
    Xh = _Xhat(spec, x, t)
    R = np.einsum("ig,igja->ija", Xh, Phat).reshape(m, m * n)
    Lij = np.linalg.solve(M.T, R.T).T.reshape(m, m, n)
    Lhat = -np.einsum("ilb,lbg->ilg", Lij, P)
    Lhat[np.arange(m), np.arange(m)] -= Xh
    return Lij, Lhat


@dataclass
class GlmSolution:
    spec: KernelSpec
    x: float
    t: float
    L: np.ndarray
    Lij: np.ndarray
    Lhat: np.ndarray
    P: np.ndarray

    def K11(self, z):
        z = np.asarray(z, float)
        s = self.spec
        coef = -np.einsum("ib,ibg->ig", self.L, self.P)
        return np.sum(coef * np.exp(1j * s.muhat * z[..., None, None]), axis=(-2, -1))

    def K1j(self, z):
        z = np.asarray(z, float)
        return np.sum(self.L * np.exp(1j * self.spec.mu * z[..., None, None]), axis=-1)

    def Ki1(self, z):
        z = np.asarray(z, float)
        return np.sum(self.Lhat * np.exp(1j * self.spec.muhat * z[..., None, None, None]), axis=(-2, -1))

    def Kij(self, z):
        z = np.asarray(z, float)
        return np.sum(self.Lij * np.exp(1j * self.spec.mu * z[..., None, None, None]), axis=-1)

    def matrix(self, z) -> np.ndarray:
        """Full ``N x N`` kernel ``K(x, z)``; batched over ``z``."""
        z = np.asarray(z, float)
        m = self.spec.m
        K = np.zeros(z.shape + (m + 1, m + 1), complex)
        K[..., 0, 0] = self.K11(z)
        K[..., 0, 1:] = self.K1j(z)
        K[..., 1:, 0] = self.Ki1(z)
        K[..., 1:, 1:] = self.Kij(z)
        return K

    def exponential_terms(self):
        """Kernel entries as ``{(r, c): (coef, rate)}`` with ``K_rc(z) = sum coef exp(i rate z)``."""
        s, m = self.spec, self.spec.m
        terms = {(0, 0): ((-np.einsum("ib,ibg->ig", self.L, self.P)).ravel(), s.muhat.ravel())}
        for j in range(m):
            terms[(0, j + 1)] = (self.L[j], s.mu[j])
        for i in range(m):
            terms[(i + 1, 0)] = (self.Lhat[i].ravel(), s.muhat.ravel())
            for j in range(m):
                terms[(i + 1, j + 1)] = (self.Lij[i, j], s.mu[j])
        return terms


def assemble_kernels(spec: KernelSpec, x: float, t: float) -> GlmSolution:
    P, _ = build_pmatrices(spec, x, t)
    L = solve_L(spec, x, t)
    Lij, Lhat = solve_Lhat(spec, x, t)
    return GlmSolution(spec=spec, x=float(x), t=float(t), L=L, Lij=Lij, Lhat=Lhat, P=P)


def F_matrix(spec: KernelSpec, x, z, t) -> np.ndarray:
    """Input kernel ``F(x, z)`` as an ``N x N`` matrix (batched over broadcast x, z)."""
    x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
    m = spec.m
    F = np.zeros(x.shape + (m + 1, m + 1), complex)
    xs, zs = x[..., None, None], z[..., None, None]
    f = spec.b * np.exp(1j * spec.Lam * t + 1j * spec.lam * xs + 1j * spec.mu * zs)
    fh = spec.bhat * np.exp(1j * spec.Lamhat * t + 1j * spec.lamhat * xs + 1j * spec.muhat * zs)
    F[..., 0, 1:] = f.sum(-1)
    F[..., 1:, 0] = fh.sum(-1)
    return F


def _F_terms(spec: KernelSpec, t: float):
    """``F_rc(y, z) = sum amp exp(i p y) exp(i q z)`` as ``{(r, c): (amp, p, q)}``."""
    m = spec.m
    terms = {}
    for j in range(m):
        terms[(0, j + 1)] = (spec.b[j] * np.exp(1j * spec.Lam[j] * t), spec.lam[j], spec.mu[j])
        terms[(j + 1, 0)] = (spec.bhat[j] * np.exp(1j * spec.Lamhat[j] * t), spec.lamhat[j], spec.muhat[j])
    return terms


def glm_residual(sol: GlmSolution, z: float) -> float:
    """Max entry of ``K(x, z) + F(x, z) + int_x^inf K(x, y) F(y, z) dy`` with exact exponential integrals."""
    spec, x, t = sol.spec, sol.x, sol.t
    N = spec.m + 1
    R = sol.matrix(z) + F_matrix(spec, x, z, t)
    kt = sol.exponential_terms()
    ft = _F_terms(spec, t)
    for r in range(N):
        for c in range(N):
            acc = 0j
            for s in range(N):
                if (r, s) not in kt or (s, c) not in ft:
                    continue
                coef, rate = kt[(r, s)]
                amp, p_, q_ = ft[(s, c)]
                k = rate[:, None] + p_[None, :]
                integral = -np.exp(1j * k * x) / (1j * k)
                acc += np.sum(coef[:, None] * amp[None, :] * integral * np.exp(1j * q_[None, :] * z))
            R[r, c] += acc
    scale = max(1.0, float(np.max(np.abs(F_matrix(spec, x, z, t)))))
    return float(np.max(np.abs(R)) / scale)


def reconstruct_fields(sol: GlmSolution, c: complex = -2.0) -> np.ndarray:
    """Field components ``u_{j-1} = c K_1j(x, x)``."""
    return c * sol.K1j(sol.x)


def glm_field(spec: KernelSpec, x, t, c: complex = -2.0) -> np.ndarray:
    """Reconstructed field on broadcast arrays of ``x`` and ``t``."""
    xb, tb = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    out = np.empty(xb.shape + (spec.m,), complex)
    for idx in np.ndindex(xb.shape):
        out[idx] = c * np.sum(solve_L(spec, xb[idx], tb[idx]) * np.exp(1j * spec.mu * xb[idx]), axis=-1)
    return out


def glm_closure(spec: KernelSpec, c: complex = -2.0):
    return lambda x, t: glm_field(spec, x, t, c)


def calibrate_constant(spec: KernelSpec, reference: Callable, xs, t: float = 0.0) -> complex:
    """Least-squares ``c`` with ``c K_1j(x, x) ~ reference(x, t)`` over the sample points."""
    K = glm_field(spec, xs, t, c=1.0).ravel()
    ref = np.asarray(reference(np.asarray(xs, float), t), complex).ravel()
    return complex(np.vdot(K, ref) / np.vdot(K, K))


def one_term_closed_form(spec: KernelSpec, x: float, t: float):
    """``(L, Lhat, C, H)`` of the single-term kernel with shared exponents across components."""
    if spec.n != 1:
        raise ValueError("closed form needs a single spectral term")
    lam, mu, lamh, muh = (np.ravel(v)[0] for v in (spec.lam, spec.mu, spec.lamhat, spec.muhat))
    Lam, Lamh = np.ravel(spec.Lam)[0], np.ravel(spec.Lamhat)[0]
    b, bh = spec.b[:, 0], spec.bhat[:, 0]
    C = np.sum(b * bh)
    H = np.exp(1j * (Lamh + Lam) * t + 1j * (lam + mu + lamh + muh) * x) / ((lam + muh) * (lamh + mu))
    L = -b * np.exp(1j * Lam * t + 1j * lam * x) / (1 + C * H)
    Lhat = -bh * np.exp(1j * Lamh * t + 1j * lamh * x) / (1 + C * H)
    return L, Lhat, C, H


def one_term_projector(spec: KernelSpec, x: float, t: float) -> np.ndarray:
    """``H bhat b^T`` so that the linear system matrix is ``1 + P``."""
    _, _, _, H = one_term_closed_form(spec, x, t)
    return H * np.outer(spec.bhat[:, 0], spec.b[:, 0])


def kernel_on_diagonal(spec: KernelSpec, x: float, t: float) -> np.ndarray:
    return assemble_kernels(spec, x, t).matrix(x)


def potential_from_fields(u, u_x, a: float) -> np.ndarray:
    """Dressed potential ``M_hat`` in terms of the field, for kernels normalized with c = -2.

    Block form ``[[(1-a)|u|^2, -u_x^T], [(1-a^2) u_x*, (1+a) u* u^T]]``.
    """
    u = np.asarray(u, complex)
    u_x = np.asarray(u_x, complex)
    m = u.shape[-1]
    M = np.zeros((m + 1, m + 1), complex)
    M[0, 0] = (1 - a) * np.sum(np.abs(u) ** 2)
    M[0, 1:] = -u_x
    M[1:, 0] = (1 - a**2) * np.conj(u_x)
    M[1:, 1:] = (1 + a) * np.outer(np.conj(u), u)
    return M


def kernel_time_residual(
    spec: KernelSpec,
    x: float,
    y: float,
    t: float,
    h: float,
    a: float,
    M_hat: Optional[Callable[[float], np.ndarray]] = None,
):
    """Residuals of the kernel evolution and of its diagonal condition, by central differences.

    Returns ``(evolution, trace)`` where

        evolution = | i a K_t - K_xx + K_yy - M_hat(x) K(x, y) |
        trace     = | 2 d/dx K(x, x) - (M_hat(x) - M(x)) |   with M = 0.

    ``M_hat`` defaults to the potential built from the reconstructed field
    and its central-difference derivative.
    """
    def K(xx, yy, tt):
        return assemble_kernels(spec, xx, tt).matrix(yy)

    if M_hat is None:
        def M_hat(xx):
            u = glm_field(spec, xx, t)
            u_x = (glm_field(spec, xx + h, t) - glm_field(spec, xx - h, t)) / (2 * h)
            return potential_from_fields(u, u_x, a)

    K0 = K(x, y, t)
    K_t = (K(x, y, t + h) - K(x, y, t - h)) / (2 * h)
    K_xx = (K(x + h, y, t) - 2 * K0 + K(x - h, y, t)) / h**2
    K_yy = (K(x, y + h, t) - 2 * K0 + K(x, y - h, t)) / h**2
    dK_diag = (kernel_on_diagonal(spec, x + h, t) - kernel_on_diagonal(spec, x - h, t)) / (2 * h)
    Mh = M_hat(x)
    evo = 1j * a * K_t - K_xx + K_yy - Mh @ K0
    trace = 2 * dK_diag - Mh
    return float(np.max(np.abs(evo))), float(np.max(np.abs(trace)))
