"""Darboux dressing of the vector NLS Lax pair.

Single-pole dressing supports kernels of any rank ``s < N``.  Multi-pole
dressing is rank one per pole and is available both as one dense linear solve
(``n_soliton``) and as a chain of elementary dressings (``chained_dressing``).
Everything broadcasts over array-valued ``x`` and ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import SingularCauchy, SingularGram
from .lax_core import FieldClosure, LaxParams, numeric_fundamental, vacuum_fundamental

COND_MAX = 1e12


@dataclass(frozen=True)
class DarbouxPole:
    mu: complex
    C: np.ndarray  # shape (N, s)

    def __post_init__(self):
        mu = complex(self.mu)
        if mu.imag == 0:
            raise ValueError("pole must have a nonzero imaginary part")
        C = np.asarray(self.C, dtype=complex)
        if C.ndim == 1:
            C = C[:, None]
        if np.linalg.matrix_rank(C) != C.shape[1]:
            raise ValueError("polarization matrix must have full column rank")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "C", C)

    @property
    def rank(self) -> int:
        return self.C.shape[1]


@dataclass(frozen=True)
class SolitonSpec:
    params: LaxParams
    poles: tuple = field(default_factory=tuple)

    def __post_init__(self):
        poles = tuple(p if isinstance(p, DarbouxPole) else DarbouxPole(*p) for p in self.poles)
        object.__setattr__(self, "poles", poles)
        N = self.params.N
        for pole in poles:
            if pole.C.shape[0] != N:
                raise ValueError(f"polarization has {pole.C.shape[0]} rows, expected {N}")
            if not 1 <= pole.rank <= N - 1:
                raise ValueError(f"rank must lie in 1..{N - 1}")
        mus = [p.mu for p in poles]
        for i, mi in enumerate(mus):
            for j, mj in enumerate(mus):
                if i != j and abs(mi - mj) < 1e-12:
                    raise ValueError("poles must be distinct")
                if abs(mi - np.conj(mj)) < 1e-12:
                    raise ValueError("a pole coincides with the conjugate of another pole")


def make_spec(N: int, kappa: int, poles: Sequence) -> SolitonSpec:
    from .lax_core import make_params

    return SolitonSpec(make_params(N, kappa), tuple(poles))


@dataclass
class Projector:
    P: np.ndarray
    q: np.ndarray
    gram: np.ndarray


def _locations(mask, x, t):
    if x is None:
        return []
    xb, tb = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    return list(zip(xb[mask].tolist(), tb[mask].tolist()))


def q_from_vacuum(spec: SolitonSpec, pole_index: int, x, t) -> np.ndarray:
    """Kernel vectors ``q`` of the pole, shape ``(..., N, s)``, from the zero-field fundamental matrix."""
    p = spec.params
    pole = spec.poles[pole_index]
    Psi_c = vacuum_fundamental(p, np.conj(pole.mu), x, t)
    # q^T = C^T Q Psi(mu*)^dagger Q, hence q = Q conj(Psi(mu*)) Q C.
    return p.Q @ np.conj(Psi_c) @ p.Q @ pole.C


def gram_matrix(p: LaxParams, q: np.ndarray) -> np.ndarray:
    """``q^T Q q*``, Hermitian of shape ``(..., s, s)``."""
    return np.swapaxes(q, -1, -2) @ p.Q @ np.conj(q)


def projector(p: LaxParams, q, x=None, t=None) -> Projector:
    """Projector ``Q q* G^-1 q^T``; raises SingularGram at degenerate points."""
    q = np.asarray(q, dtype=complex)
    if q.ndim == 1:
        q = q[:, None]
    G = gram_matrix(p, q)
    scale = np.sum(np.abs(q) ** 2, axis=(-2, -1))
    with np.errstate(all="ignore"):
        sv = np.linalg.svd(G, compute_uv=False)
        bad = (sv[..., -1] <= 1e-12 * scale) | (sv[..., 0] > COND_MAX * sv[..., -1])
    if np.any(bad):
        raise SingularGram(
            f"Gram matrix is singular at {int(np.sum(bad))} point(s)", _locations(bad, x, t)
        )
    P = p.Q @ np.conj(q) @ np.linalg.solve(G, np.swapaxes(q, -1, -2))
    return Projector(P=P, q=q, gram=G)


def darboux_matrix(pr: Projector, mu: complex, lam: complex) -> np.ndarray:
    mu, lam = complex(mu), complex(lam)
    if lam == mu:
        raise ValueError("Darboux matrix has a pole at lambda = mu")
    N = pr.P.shape[-1]
    return np.eye(N) + (mu - np.conj(mu)) / (lam - mu) * pr.P


def darboux_inverse(pr: Projector, mu: complex, lam: complex) -> np.ndarray:
    mu, lam = complex(mu), complex(lam)
    if lam == np.conj(mu):
        raise ValueError("inverse Darboux matrix has a pole at lambda = mu*")
    N = pr.P.shape[-1]
    return np.eye(N) + (np.conj(mu) - mu) / (lam - np.conj(mu)) * pr.P


def bordered_ratio(A: np.ndarray, col: np.ndarray, row: np.ndarray) -> np.ndarray:
    """``row A^-1 col`` written as ``-det([[A, col], [row, 0]]) / det(A)``.

    ``A`` is ``(..., n, n)``, ``col`` is ``(..., n, k)``, ``row`` is ``(..., n)``.
    Returns shape ``(..., k)``.
    """
    n = A.shape[-1]
    k = col.shape[-1]
    batch = A.shape[:-2]
    B = np.zeros(batch + (k, n + 1, n + 1), dtype=complex)
    B[..., :n, :n] = A[..., None, :, :]
    B[..., :n, n] = np.moveaxis(col, -1, -2)
    B[..., n, :n] = row[..., None, :]
    return -np.linalg.det(B) / np.linalg.det(A)[..., None]


def _dress_from_q(p: LaxParams, mu: complex, q: np.ndarray, seed: np.ndarray, x=None, t=None):
    # Validates the Gram matrix (raises SingularGram) before the determinant ratio.
    projector(p, q, x, t)
    G = gram_matrix(p, q)
    row = (p.Q @ np.conj(q))[..., -1, :]  # last row of Q q*
    col = np.swapaxes(q[..., :-1, :], -1, -2)  # (..., s, N-1)
    P_last = bordered_ratio(G, col, row)
    return seed + 1j * (np.conj(mu) - mu) / p.sqrt_kappa * P_last


def dress_once(
    spec: SolitonSpec,
    pole_index: int,
    x,
    t,
    seed: Optional[FieldClosure] = None,
    n_steps: int = 200,
) -> np.ndarray:
    """Field dressed by one pole, shape ``broadcast(x, t) + (N-1,)``.

    With ``seed=None`` the seed is the zero field and everything is closed
    form.  A nonzero seed is supported at scalar ``(x, t)`` through the
    numerically integrated fundamental matrix of the seed.
    """
    p = spec.params
    pole = spec.poles[pole_index]
    if seed is None:
        q = q_from_vacuum(spec, pole_index, x, t)
        shape = np.broadcast_shapes(np.shape(x), np.shape(t))
        return _dress_from_q(p, pole.mu, q, np.zeros(shape + (p.ncomp,), complex), x, t)
    x, t = float(x), float(t)
    Psi_c = numeric_fundamental(p, seed, np.conj(pole.mu), x, t, n_steps)
    q = p.Q @ Psi_c.conj() @ p.Q @ pole.C
    return _dress_from_q(p, pole.mu, q, np.asarray(seed(x, t), complex), x, t)


def explicit_rank_one(spec: SolitonSpec, pole_index: int, x, t) -> np.ndarray:
    """Closed-form rank-one dressing of the zero field, written without projectors."""
    p = spec.params
    mu = spec.poles[pole_index].mu
    q = q_from_vacuum(spec, pole_index, x, t)[..., 0]
    top = np.sum(np.abs(q[..., :-1]) ** 2, axis=-1)
    denom = top - p.kappa * np.abs(q[..., -1]) ** 2
    return -1j * (np.conj(mu) - mu) * p.sqrt_kappa * (np.conj(q[..., -1]) / denom)[..., None] * q[..., :-1]


def _rank_one_vectors(spec: SolitonSpec, x, t, normalize: bool):
    if any(pole.rank != 1 for pole in spec.poles):
        raise ValueError("multi-pole dressing requires rank-one poles")
    qs = np.stack([q_from_vacuum(spec, i, x, t)[..., 0] for i in range(len(spec.poles))], axis=-2)
    if normalize:
        qs = qs / np.linalg.norm(qs, axis=-1, keepdims=True)
    return qs  # (..., n, N)


def cauchy_matrix(spec: SolitonSpec, qs: np.ndarray) -> np.ndarray:
    """``S[j, i] = q_i^T Q q_j* / (mu_i - mu_j*)`` so that the system reads ``S @ p = Q q*``."""
    p = spec.params
    mus = np.array([pole.mu for pole in spec.poles])
    inner = np.conj(qs) @ p.Q @ np.swapaxes(qs, -1, -2)  # [j, i] = q_j* Q q_i
    return inner / (mus[None, :] - np.conj(mus)[:, None])


def multi_pole_p(spec: SolitonSpec, x, t, normalize: bool = False, return_q: bool = False):
    """Solve for the residue vectors ``p_i``; returns shape ``(..., n, N)``.

    ``normalize`` rescales each ``q_i`` to unit length first; the dressed field
    is unchanged by this and the linear system is better conditioned.
    """
    p = spec.params
    qs = _rank_one_vectors(spec, x, t, normalize)
    S = cauchy_matrix(spec, qs)
    rhs = np.conj(qs) @ p.Q  # rows are (Q q_j*)^T
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(S)
    bad = ~np.isfinite(cond) | (cond > COND_MAX)
    if np.any(bad):
        raise SingularCauchy(
            f"Cauchy matrix is singular at {int(np.sum(bad))} point(s)", _locations(bad, x, t)
        )
    ps = np.linalg.solve(S, rhs)
    return (ps, qs) if return_q else ps


def pole_system_residual(spec: SolitonSpec, ps: np.ndarray, qs: np.ndarray) -> float:
    """Relative residual of the defining linear system for the ``p_i``."""
    S = cauchy_matrix(spec, qs)
    rhs = np.conj(qs) @ spec.params.Q
    return float(np.max(np.linalg.norm(S @ ps - rhs, axis=(-2, -1)) / np.linalg.norm(rhs, axis=(-2, -1))))


def tau_functions(spec: SolitonSpec, x, t):
    """Return ``(tau, tau_j)`` with the dressed field ``-(i/sqrt(kappa)) tau_j / tau``."""
    p = spec.params
    qs = _rank_one_vectors(spec, x, t, normalize=True)
    S = cauchy_matrix(spec, qs)
    last = (np.conj(qs) @ p.Q)[..., :, -1]  # (Q q_j*)_N per equation j
    # sum_k (p_k)_N (q_k)_j = c_j^T S^-1 last, with c_j[k] = (q_k)_j
    ratio = bordered_ratio(np.swapaxes(S, -1, -2), qs[..., :-1], last)
    tau = np.linalg.det(S)
    return tau, ratio * tau[..., None]


def n_soliton(spec: SolitonSpec, x, t) -> np.ndarray:
    """Zero-field seed dressed by all rank-one poles at once."""
    p = spec.params
    ps, qs = multi_pole_p(spec, x, t, normalize=True, return_q=True)
    acc = np.einsum("...k,...kj->...j", ps[..., :, -1], qs[..., :, :-1])
    return -1j / p.sqrt_kappa * acc


def residue_sum(spec: SolitonSpec, x, t) -> float:
    """Size of ``sum_i M_i + sum_i Q M_i^dagger Q`` where ``M_i = p_i q_i^T``."""
    p = spec.params
    ps, qs = multi_pole_p(spec, x, t, normalize=True, return_q=True)
    M = np.einsum("...ka,...kb->...ab", ps, qs)
    R = M + p.Q @ np.conj(np.swapaxes(M, -1, -2)) @ p.Q
    return float(np.max(np.linalg.norm(R, axis=(-2, -1))))


def chained_dressing(spec: SolitonSpec, x, t) -> np.ndarray:
    """Compose elementary dressings pole by pole (any rank per pole)."""
    p = spec.params
    shape = np.broadcast_shapes(np.shape(x), np.shape(t))
    u = np.zeros(shape + (p.ncomp,), complex)
    done: list = []  # (mu, Projector) of previous poles
    for i, pole in enumerate(spec.poles):
        q = q_from_vacuum(spec, i, x, t)
        qT = np.swapaxes(q, -1, -2)
        for mu_k, pr_k in done:
            qT = qT @ darboux_inverse(pr_k, mu_k, pole.mu)
        q = np.swapaxes(qT, -1, -2)
        q = q / np.linalg.norm(q, axis=-2, keepdims=True)
        u = _dress_from_q(p, pole.mu, q, u, x, t)
        done.append((pole.mu, projector(p, q, x, t)))
    return u


def soliton_closure(spec: SolitonSpec, method: str = "chain") -> FieldClosure:
    """Wrap a construction as a pure ``(x, t) -> field`` map."""
    if method == "chain":
        return lambda x, t: chained_dressing(spec, x, t)
    if method == "nsoliton":
        return lambda x, t: n_soliton(spec, x, t)
    if method == "single":
        return lambda x, t: dress_once(spec, 0, x, t)
    raise ValueError(f"unknown method {method!r}")


def laplace_det(A) -> complex:
    """Determinant by recursive cofactor expansion along the first row."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    if n == 1:
        return A[0, 0]
    total = 0j
    for k in range(n):
        minor = np.delete(np.delete(A, 0, axis=0), k, axis=1)
        total += (-1) ** k * A[0, k] * laplace_det(minor)
    return total


def cramer_solve(A, B) -> np.ndarray:
    """Solve ``A X = B`` column by column with Cramer's rule and cofactor determinants."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if B.ndim == 1:
        B = B[:, None]
    det = laplace_det(A)
    X = np.empty(B.shape, dtype=complex)
    for c in range(B.shape[1]):
        for i in range(A.shape[0]):
            Ai = A.copy()
            Ai[:, i] = B[:, c]
            X[i, c] = laplace_det(Ai) / det
    return X


def cramer_n_soliton(spec: SolitonSpec, x: float, t: float):
    """Scalar-point n-soliton via cofactor expansion only.

    Returns ``(p, field)`` where ``p`` solves the pole system by Cramer's rule
    and the field is the ratio of bordered cofactor determinants.
    """
    p = spec.params
    qs = _rank_one_vectors(spec, float(x), float(t), normalize=True)
    S = cauchy_matrix(spec, qs)
    rhs = np.conj(qs) @ p.Q
    ps = cramer_solve(S, rhs)
    n = S.shape[0]
    last = rhs[:, -1]
    tau = laplace_det(S)
    field = np.empty(p.ncomp, dtype=complex)
    for j in range(p.ncomp):
        B = np.zeros((n + 1, n + 1), dtype=complex)
        B[:n, :n] = S.T
        B[:n, n] = qs[:, j]
        B[n, :n] = last
        field[j] = -1j / p.sqrt_kappa * (-laplace_det(B)) / tau
    return ps, field


def peak_modulus(f, x_lo: float, x_hi: float, dx: float = 1e-2, component: Optional[int] = None):
    """Largest value of ``|f(x)|`` on an interval: grid scan then bounded refinement.

    ``f`` maps an x array to field vectors.  Returns ``(x_peak, value)``.
    """
    def mod(xx):
        v = np.asarray(f(np.asarray(xx, float)))
        if component is not None:
            return np.abs(v[..., component])
        return np.linalg.norm(v, axis=-1)

    xs = np.arange(x_lo, x_hi + dx / 2, dx)
    vals = mod(xs)
    k = int(np.argmax(vals))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    res = minimize_scalar(lambda s: -float(mod(np.array([s]))[0]), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    if -res.fun >= vals[k]:
        return float(res.x), float(-res.fun)
    return float(xs[k]), float(vals[k])
