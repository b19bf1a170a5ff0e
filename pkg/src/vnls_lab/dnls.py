"""Discrete vector NLS lattice with an optional point defect.

Sites are 0-based and periodic.  Each site carries a co-vector ``x[j]`` and a
vector ``X[j]`` of length ``m = N - 1``.  A defect replaces the fields on one
site ``n`` by the entries of an ``N x N`` matrix ``[[alpha, beta], [gamma, Delta]]``.

Defect-neighbourhood equations of motion are kept in their reference form
by default.  ``zcc_discrete`` (discrete zero curvature) and ``lntau_check``
(charges read off the transfer matrix) check them independently.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import DefectError, IntegrationError


@dataclass
class Defect:
    site: int
    alpha: complex
    beta: np.ndarray  # co-vector, length m
    gamma: np.ndarray  # vector, length m
    Delta: np.ndarray  # (m, m)

    def __post_init__(self):
        self.alpha = complex(self.alpha)
        self.beta = np.asarray(self.beta, complex).copy()
        self.gamma = np.asarray(self.gamma, complex).copy()
        self.Delta = np.asarray(self.Delta, complex).copy()

    def matrix(self) -> np.ndarray:
        m = len(self.beta)
        A = np.empty((m + 1, m + 1), complex)
        A[0, 0] = self.alpha
        A[0, 1:] = self.beta
        A[1:, 0] = self.gamma
        A[1:, 1:] = self.Delta
        return A

    @classmethod
    def from_matrix(cls, site: int, A: np.ndarray) -> "Defect":
        return cls(site, A[0, 0], A[0, 1:], A[1:, 0], A[1:, 1:])


@dataclass
class LatticeState:
    x: np.ndarray  # (Nsites, m)
    X: np.ndarray  # (Nsites, m)
    defect: Optional[Defect] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, complex).copy()
        self.X = np.asarray(self.X, complex).copy()
        if self.x.ndim == 1:
            self.x = self.x[:, None]
            self.X = self.X[:, None]
        if self.x.shape != self.X.shape:
            raise ValueError("x and X must have the same shape")
        if self.Nsites < 5:
            raise ValueError("need at least 5 sites")
        if self.defect is not None:
            n = self.defect.site
            if not 1 <= n <= self.Nsites - 2:
                raise DefectError("defect may not sit on the first or last site")
            # the defect site carries no fields
            self.x[n] = 0
            self.X[n] = 0

    @property
    def Nsites(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def N(self) -> int:
        return self.m + 1

    @property
    def n(self) -> int:
        if self.defect is None:
            raise DefectError("no defect configured")
        return self.defect.site

    def Nfield(self) -> np.ndarray:
        """``1 + <x_j|X_j>`` per site, recomputed on every call."""
        return 1 + np.sum(self.x * self.X, axis=-1)

    def copy(self) -> "LatticeState":
        d = None if self.defect is None else replace(self.defect)
        return LatticeState(self.x, self.X, d)

    def pack(self) -> np.ndarray:
        parts = [self.x.ravel(), self.X.ravel()]
        if self.defect is not None:
            parts.append(self.defect.matrix().ravel())
        return np.concatenate(parts)

    def unpack(self, v: np.ndarray) -> "LatticeState":
        k = self.Nsites * self.m
        x = v[:k].reshape(self.x.shape)
        X = v[k : 2 * k].reshape(self.X.shape)
        d = None
        if self.defect is not None:
            d = Defect.from_matrix(self.defect.site, v[2 * k :].reshape(self.N, self.N))
        return LatticeState(x, X, d)


def zero_state(Nsites: int, N: int, defect_site: Optional[int] = None) -> LatticeState:
    m = N - 1
    d = None
    if defect_site is not None:
        d = Defect(defect_site, 0, np.zeros(m), np.zeros(m), np.zeros((m, m)))
    return LatticeState(np.zeros((Nsites, m)), np.zeros((Nsites, m)), d)


def random_state(
    rng: np.random.Generator,
    Nsites: int,
    N: int,
    amplitude: float,
    defect_site: Optional[int] = None,
    defect_amplitude: Optional[float] = None,
) -> LatticeState:
    """Fields with complex entries of modulus at most ``amplitude``."""
    m = N - 1

    def draw(shape, amp):
        return amp * rng.uniform(0, 1, shape) * np.exp(2j * np.pi * rng.uniform(0, 1, shape))

    d = None
    if defect_site is not None:
        da = amplitude if defect_amplitude is None else defect_amplitude
        d = Defect.from_matrix(defect_site, draw((N, N), da))
    return LatticeState(draw((Nsites, m), amplitude), draw((Nsites, m), amplitude), d)


# --- Lax matrices and monodromy -------------------------------------------------


def site_lax(state: LatticeState, j: int, lam: complex) -> np.ndarray:
    if not 0 <= j < state.Nsites:
        raise IndexError(f"site {j} out of range")
    if state.defect is not None and j == state.defect.site:
        raise DefectError("site carries the defect; use defect_lax")
    L = np.eye(state.N, dtype=complex)
    L[0, 0] = state.Nfield()[j] + lam
    L[0, 1:] = state.x[j]
    L[1:, 0] = state.X[j]
    return L


def defect_lax(state: LatticeState, lam: complex) -> np.ndarray:
    if state.defect is None:
        raise DefectError("no defect configured")
    return lam * np.eye(state.N) + state.defect.matrix()


def lax_at(state: LatticeState, j: int, lam: complex) -> np.ndarray:
    if state.defect is not None and j == state.defect.site:
        return defect_lax(state, lam)
    return site_lax(state, j, lam)


def monodromy(state: LatticeState, lam: complex, scale: complex = 1.0) -> np.ndarray:
    """Ordered product ``L_{N-1} ... L_0``, each factor divided by ``scale``."""
    T = np.eye(state.N, dtype=complex)
    for j in range(state.Nsites):
        T = (lax_at(state, j, lam) / scale) @ T
    return T


def monodromy_right_fold(state: LatticeState, lam: complex) -> np.ndarray:
    T = np.eye(state.N, dtype=complex)
    for j in reversed(range(state.Nsites)):
        T = T @ lax_at(state, j, lam)
    return T


# --- conserved charges ----------------------------------------------------------


@dataclass
class ChargeTriple:
    I1: complex
    I2: complex
    I3: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.I1, self.I2, self.I3], complex)


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def charges_bulk(state: LatticeState) -> ChargeTriple:
    if state.defect is not None:
        raise DefectError("state has a defect; use charges_defect")
    Nf = state.Nfield()
    x, X = state.x, state.X
    h1 = _dot(x, np.roll(X, 1, axis=0))  # <x_i|X_{i-1}>
    h2 = _dot(x, np.roll(X, 2, axis=0))  # <x_i|X_{i-2}>
    I1 = np.sum(Nf)
    I2 = -0.5 * np.sum(Nf**2) + np.sum(h1)
    I3 = np.sum(Nf**3) / 3 + np.sum(h2) - np.sum((np.roll(Nf, 1) + Nf) * h1)
    return ChargeTriple(complex(I1), complex(I2), complex(I3))


def charges_defect(state: LatticeState, reference_form: bool = False) -> ChargeTriple:
    """Defect charges in closed form.

    ``reference_form=True`` weights the two bridging products of the third charge by
    ``+N_{n+1}`` and ``+(N_{n-1} - alpha)``.  The default uses ``-N_{n+1}`` and
    ``-(N_{n-1} + alpha)``, which is what the transfer-matrix expansion gives.
    """
    d = state.defect
    if d is None:
        raise DefectError("no defect configured")
    S = state.Nsites
    n = d.site
    Nf = state.Nfield()
    x, X = state.x, state.X
    al, be, ga, De = d.alpha, d.beta, d.gamma, d.Delta

    def s(k):
        return k % S

    xt = x[s(n + 1)] + be  # x~_{n+1}
    Xt = X[s(n - 1)] + ga  # X~_{n-1}
    others = [i for i in range(S) if i != n]
    sgn = 1 if reference_form else -1

    I1 = sum(Nf[i] for i in others) + al
    I2 = (
        -0.5 * sum(Nf[i] ** 2 for i in others)
        - 0.5 * al**2
        + sum(_dot(x[s(i + 1)], X[i]) for i in range(S) if i not in (n, s(n - 1)))
        + _dot(x[s(n + 1)], X[s(n - 1)])
        + _dot(be, X[s(n - 1)])
        + _dot(x[s(n + 1)], ga)
    )
    I3 = (
        sum(Nf[i] ** 3 for i in others) / 3
        + al**3 / 3
        + sum(_dot(x[s(i + 1)], X[s(i - 1)]) for i in range(S) if i not in (n, s(n - 1), s(n + 1)))
        - sum((Nf[i] + Nf[s(i + 1)]) * _dot(x[s(i + 1)], X[i]) for i in range(S) if i not in (n, s(n - 1)))
        + sgn * Nf[s(n + 1)] * _dot(x[s(n + 1)], Xt)
        + (sgn * Nf[s(n - 1)] - al) * _dot(xt, X[s(n - 1)])
        + x[s(n + 1)] @ De @ X[s(n - 1)]
        + _dot(x[s(n + 2)], Xt)
        + _dot(xt, X[s(n - 2)])
        - al * _dot(x[s(n + 1)], ga)
    )
    return ChargeTriple(complex(I1), complex(I2), complex(I3))


def charges(state: LatticeState) -> ChargeTriple:
    return charges_bulk(state) if state.defect is None else charges_defect(state)


# --- equations of motion --------------------------------------------------------


@dataclass
class Derivative:
    x: np.ndarray
    X: np.ndarray
    defect: Optional[np.ndarray] = None  # d/dt of the defect matrix

    def pack(self) -> np.ndarray:
        parts = [self.x.ravel(), self.X.ravel()]
        if self.defect is not None:
            parts.append(self.defect.ravel())
        return np.concatenate(parts)


def _bulk_rhs(x, X, Nf):
    xp1, xp2 = np.roll(x, -1, axis=0), np.roll(x, -2, axis=0)
    Xm1, Xm2 = np.roll(X, 1, axis=0), np.roll(X, 2, axis=0)
    Np1, Nm1 = np.roll(Nf, -1), np.roll(Nf, 1)
    coef = Nf**2 - _dot(xp1, X) - _dot(x, Xm1)
    dx = coef[:, None] * x - (Nf + Np1)[:, None] * xp1 + xp2
    dX = -coef[:, None] * X + (Nm1 + Nf)[:, None] * Xm1 - Xm2
    return dx, dX


def eom_rhs(state: LatticeState, corrected: bool = False) -> Derivative:
    """Time derivative of every evolving variable.

    The defect-neighbourhood equations are the reference ones.  ``corrected=True``
    adds the ``-alpha x_{n+1}`` term to the ``x_{n-1}`` equation, which the
    discrete zero-curvature condition and the Hamiltonian flow of the third
    charge both require.
    """
    x, X = state.x, state.X
    Nf = state.Nfield()
    dx, dX = _bulk_rhs(x, X, Nf)
    d = state.defect
    if d is None:
        return Derivative(dx, dX)

    S, n = state.Nsites, d.site
    al, be, ga, De = d.alpha, d.beta, d.gamma, d.Delta

    def s(k):
        return k % S

    def N_(k):
        return Nf[s(k)]

    def x_(k):
        return x[s(k)]

    def X_(k):
        return X[s(k)]

    ip = _dot

    # site n-2
    j = n - 2
    dx[s(j)] = (
        N_(j) ** 2 * x_(j)
        - ip(x_(j + 1), X_(j)) * x_(j)
        - ip(x_(j), X_(j - 1)) * x_(j)
        - (N_(j + 1) + N_(j)) * x_(j + 1)
        + be
        + x_(n + 1)
    )
    dX[s(j)] = (
        -X_(j) * N_(j) ** 2
        + X_(j) * ip(x_(j + 1), X_(j))
        + X_(j) * ip(x_(j), X_(j - 1))
        + X_(j - 1) * (N_(j) + N_(j - 1))
        - X_(j - 2)
    )
    # site n-1
    j = n - 1
    dx[s(j)] = (
        N_(j) ** 2 * x_(j)
        - ip(x_(n + 1), X_(j)) * x_(j)
        - ip(x_(j), X_(j - 1)) * x_(j)
        - ip(be, X_(j)) * x_(j)
        - al * be
        - N_(j) * be
        - (N_(j) + N_(n + 1)) * x_(n + 1)
        + x_(n + 1) @ De
        + x_(n + 2)
    )
    if corrected:
        dx[s(j)] -= al * x_(n + 1)
    dX[s(j)] = (
        -X_(j) * N_(j) ** 2
        + X_(j) * ip(x_(n + 1), X_(j))
        + X_(j) * ip(x_(j), X_(j - 1))
        + X_(j) * ip(be, X_(j))
        + X_(j - 1) * (N_(j) + N_(j - 1))
        - X_(j - 2)
    )
    # site n+1
    j = n + 1
    dx[s(j)] = (
        N_(j) ** 2 * x_(j)
        - ip(x_(j), X_(n - 1)) * x_(j)
        - ip(x_(j + 1), X_(j)) * x_(j)
        - ip(x_(j), ga) * x_(j)
        - (N_(j) + N_(j + 1)) * x_(j + 1)
        + x_(j + 2)
    )
    dX[s(j)] = (
        -X_(j) * N_(j) ** 2
        + X_(j) * ip(x_(j), X_(n - 1))
        + X_(j) * ip(x_(j + 1), X_(j))
        + X_(j) * ip(x_(j), ga)
        + ga * N_(j)
        + ga * al
        + X_(n - 1) * al
        - De @ X_(n - 1)
        + X_(n - 1) * (N_(n - 1) + N_(j))
        - X_(n - 2)
    )
    # site n+2
    j = n + 2
    dx[s(j)] = (
        N_(j) ** 2 * x_(j)
        - ip(x_(j), X_(j - 1)) * x_(j)
        - ip(x_(j + 1), X_(j)) * x_(j)
        - (N_(j) + N_(j + 1)) * x_(j + 1)
        + x_(j + 2)
    )
    dX[s(j)] = (
        -X_(j) * N_(j) ** 2
        + X_(j) * ip(x_(j), X_(j - 1))
        + X_(j) * ip(x_(j + 1), X_(j))
        + X_(j - 1) * (N_(j - 1) + N_(j))
        - ga
        - X_(n - 1)
    )
    dx[n] = 0
    dX[n] = 0

    # defect variables
    xn1, xn2 = x_(n + 1), x_(n + 2)
    Xn1, Xn2 = X_(n - 1), X_(n - 2)
    Nm, Np = N_(n - 1), N_(n + 1)
    bX = ip(be, Xn1)
    xg = ip(xn1, ga)
    xX = ip(xn1, Xn1)
    dal = (al + Nm) * bX - (al + Np) * xg + ip(xn2, ga) - ip(be, Xn2)
    dbe = (
        -xX * be
        - xg * be
        - bX * be
        + al**2 * be
        + al * (al + Np) * xn1
        - (al + Np) * (xn1 @ De)
        - bX * xn1
        - al * xn2
        + xn2 @ De
    )
    dga = (
        -ga * al**2
        + ga * xg
        + ga * xX
        + ga * bX
        - Xn1 * al**2
        - Xn1 * al * Nm
        + (De @ Xn1) * (al + Nm)
        + Xn1 * xg
        + Xn2 * al
        - De @ Xn2
    )
    outer_Xx = np.outer(Xn1, xn1)
    dDe = (
        -(al + Nm) * np.outer(Xn1, be)
        + (al + Np) * np.outer(ga, xn1)
        + np.outer(Xn2, be)
        - np.outer(ga, xn2)
        + outer_Xx @ De
        - De @ outer_Xx
    )
    dA = np.empty((state.N, state.N), complex)
    dA[0, 0] = dal
    dA[0, 1:] = dbe
    dA[1:, 0] = dga
    dA[1:, 1:] = dDe
    return Derivative(dx, dX, dA)


def _rhs_vector(state: LatticeState, corrected: bool = False):
    def f(v):
        r = eom_rhs(state.unpack(v), corrected).pack()
        if not np.all(np.isfinite(r)):
            raise IntegrationError("non-finite time derivative")
        return r

    return f


def _rk4(state: LatticeState, dt: float, f: Callable) -> LatticeState:
    v = state.pack()
    k1 = f(v)
    k2 = f(v + dt / 2 * k1)
    k3 = f(v + dt / 2 * k2)
    k4 = f(v + dt * k3)
    return state.unpack(v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))


def rk4_step(state: LatticeState, dt: float, corrected: bool = False) -> LatticeState:
    """Classical RK4 step of fields and defect variables together."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return _rk4(state, dt, _rhs_vector(state, corrected))


def evolve(
    state: LatticeState,
    dt: float,
    T: float,
    monitor: Optional[Callable] = None,
    corrected: bool = False,
) -> LatticeState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = int(round(T / dt))
    f = _rhs_vector(state, corrected)
    for k in range(steps):
        state = _rk4(state, dt, f)
        if monitor is not None:
            monitor(k + 1, state)
    return state


def max_linear_growth(samples: int = 4097) -> float:
    """Largest real part of the bulk flow linearised about the zero state.

    A Fourier mode ``exp(i k j)`` of ``x`` grows at ``Re (1 - e^{ik})^2`` and
    one of ``X`` at ``-Re (1 - e^{-ik})^2``.
    """
    k = np.linspace(0, 2 * np.pi, samples)
    rates = np.concatenate([((1 - np.exp(1j * k)) ** 2).real, (-((1 - np.exp(-1j * k)) ** 2)).real])
    return float(rates.max())


def charge_drift(state: LatticeState, dt: float, T: float, corrected: bool = False) -> np.ndarray:
    """Max relative deviation of (I1, I2, I3) from their initial values over the run.

    A run that blows up reports ``inf`` for every charge instead of raising.
    """
    c0 = charges(state).as_array()
    worst = np.zeros(3)

    def monitor(_, s):
        nonlocal worst
        c = charges(s).as_array()
        worst = np.maximum(worst, np.abs(c - c0) / np.abs(c0))

    try:
        with np.errstate(over="raise", invalid="raise"):
            evolve(state, dt, T, monitor, corrected)
    except (IntegrationError, FloatingPointError, OverflowError):
        return np.full(3, np.inf)
    return worst


# --- time-Lax matrices and discrete zero curvature ------------------------------


def a1_matrix(state: LatticeState) -> np.ndarray:
    A = np.zeros((state.N, state.N), complex)
    A[0, 0] = 1
    return A


def a2_matrix(state: LatticeState, j: int, mu: complex) -> np.ndarray:
    S = state.Nsites
    x, X = state.x, state.X
    top, left = x[j % S], X[(j - 1) % S]
    if state.defect is not None:
        n = state.defect.site
        if j % S == n:
            top = x[(n + 1) % S] + state.defect.beta
        elif j % S == (n + 1) % S:
            left = X[(n - 1) % S] + state.defect.gamma
    A = np.zeros((state.N, state.N), complex)
    A[0, 0] = mu
    A[0, 1:] = top
    A[1:, 0] = left
    return A


def _a3_block(N, tl, tr, bl, br):
    A = np.empty((N, N), complex)
    A[0, 0] = tl
    A[0, 1:] = tr
    A[1:, 0] = bl
    A[1:, 1:] = br
    return A


def a3_matrix(state: LatticeState, j: int, mu: complex) -> np.ndarray:
    """Third time-Lax matrix at site ``j`` (bulk form or one of the defect-neighbourhood forms)."""
    S = state.Nsites
    if not -S <= j < 2 * S:
        raise IndexError(f"site {j} out of range")
    j %= S
    x, X, Nf = state.x, state.X, state.Nfield()

    def s(k):
        return k % S

    d = state.defect
    if d is None or j not in (s(d.site - 1), d.site, s(d.site + 1), s(d.site + 2)):
        return _a3_block(
            state.N,
            mu**2 - _dot(x[j], X[s(j - 1)]),
            mu * x[j] - Nf[j] * x[j] + x[s(j + 1)],
            X[s(j - 1)] * mu - X[s(j - 1)] * Nf[s(j - 1)] + X[s(j - 2)],
            np.outer(X[s(j - 1)], x[j]),
        )
    n = d.site
    al, De = d.alpha, d.Delta
    xt = x[s(n + 1)] + d.beta
    Xt = X[s(n - 1)] + d.gamma
    xhat = x[s(n + 1)] @ De - Nf[s(n + 1)] * x[s(n + 1)] - al * xt
    Xhat = De @ X[s(n - 1)] - X[s(n - 1)] * Nf[s(n - 1)] - Xt * al
    if j == s(n - 1):
        return _a3_block(
            state.N,
            mu**2 - _dot(x[j], X[s(j - 1)]),
            (mu - Nf[j]) * x[j] + xt,
            X[s(j - 1)] * (mu - Nf[s(j - 1)]) + X[s(j - 2)],
            np.outer(X[s(j - 1)], x[j]),
        )
    if j == n:
        return _a3_block(
            state.N,
            mu**2 - _dot(xt, X[s(n - 1)]),
            xt * mu + xhat + x[s(n + 2)],
            X[s(n - 1)] * (mu - Nf[s(n - 1)]) + X[s(n - 2)],
            np.outer(X[s(n - 1)], xt),
        )
    if j == s(n + 1):
        return _a3_block(
            state.N,
            mu**2 - _dot(x[j], Xt),
            (mu - Nf[j]) * x[j] + x[s(j + 1)],
            Xt * mu + Xhat + X[s(n - 2)],
            np.outer(Xt, x[j]),
        )
    # j == n + 2
    return _a3_block(
        state.N,
        mu**2 - _dot(x[j], X[s(j - 1)]),
        (mu - Nf[j]) * x[j] + x[s(j + 1)],
        X[s(j - 1)] * (mu - Nf[s(j - 1)]) + Xt,
        np.outer(X[s(j - 1)], x[j]),
    )


def zcc_discrete(
    state: LatticeState,
    j: int,
    mu: complex,
    h: float,
    lam: Optional[complex] = None,
    corrected: bool = False,
    rhs: Optional[Callable] = None,
) -> float:
    """``|| dL_j/dt - (A3_{j+1} L_j - L_j A3_j) ||_F`` with ``dL_j/dt`` from RK4 states at ``t +- h``.

    ``lam`` defaults to ``mu``.  ``rhs`` replaces the packed equations of
    motion (used to test a deliberately broken right-hand side).
    The identity only holds at ``lam == mu``; other pairs leave an
    h-independent remainder.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    lam = mu if lam is None else lam
    S = state.Nsites
    j %= S
    f = rhs or _rhs_vector(state, corrected)
    fwd = _rk4(state, h, f)
    bwd = _rk4(state, -h, f)
    dL = (lax_at(fwd, j, lam) - lax_at(bwd, j, lam)) / (2 * h)
    L = lax_at(state, j, lam)
    comm = a3_matrix(state, (j + 1) % S, mu) @ L - L @ a3_matrix(state, j, mu)
    return float(np.linalg.norm(dL - comm))


def site_classes(state: LatticeState) -> dict:
    """Representative site index for every class that has its own equations."""
    S = state.Nsites
    if state.defect is None:
        return {"bulk": S // 2}
    n = state.defect.site
    return {
        "bulk": (n + S // 2) % S,
        "n-2": (n - 2) % S,
        "n-1": (n - 1) % S,
        "n": n,
        "n+1": (n + 1) % S,
        "n+2": (n + 2) % S,
    }


# --- charges from the transfer matrix -------------------------------------------


def default_lambda_samples(state: LatticeState, count: int = 64) -> np.ndarray:
    R = 2 * state.Nsites + 10
    return R * np.exp(2j * np.pi * np.arange(count) / count)


def lntau_check(state: LatticeState, lambda_samples=None, order: Optional[int] = None) -> ChargeTriple:
    """Fit ``ln(tr T(lam) / lam^Nsites) = sum_k I_k lam^-k`` by least squares.

    Samples default to a circle of radius ``2 Nsites + 10``, where the fit
    reduces to a discrete Fourier transform and truncation error is negligible.
    """
    lams = default_lambda_samples(state) if lambda_samples is None else np.asarray(lambda_samples, complex)
    if len(np.unique(lams)) < 6:
        raise ValueError("need at least 6 distinct samples")
    vals = np.array([np.trace(monodromy(state, lam, scale=lam)) for lam in lams])
    f = np.log(vals)
    K = order if order is not None else min(len(lams) - 1, 24)
    R = np.max(np.abs(lams))
    V = (lams[:, None] / R) ** (-np.arange(1, K + 1)[None, :])
    cond = np.linalg.cond(V)
    if cond > 1e10:
        raise np.linalg.LinAlgError(f"charge fit is ill-conditioned (condition {cond:.3g})")
    coef, *_ = np.linalg.lstsq(V, f, rcond=None)
    I = coef[:3] * R ** np.arange(1, 4)
    return ChargeTriple(complex(I[0]), complex(I[1]), complex(I[2]))


# --- Poisson brackets -----------------------------------------------------------


def _grad(f: Callable, state: LatticeState, h: float):
    """Holomorphic central-difference gradient with respect to the packed variables."""
    v = state.pack()
    g = np.zeros(v.shape, complex)
    for k in range(len(v)):
        e = np.zeros(v.shape, complex)
        e[k] = h
        fp = f(state.unpack(v + e))
        fm = f(state.unpack(v - e))
        g[k] = (fp - fm) / (2 * h)
    if not np.all(np.isfinite(g)):
        raise IntegrationError("non-finite finite-difference gradient")
    return g


def poisson_bracket(f: Callable, g: Callable, state: LatticeState, h: float = 1e-5) -> complex:
    """``{f, g}`` with ``{x_j^k, X_j^l} = -delta_kl`` on fields and the linear gl_N bracket on the defect.

    Defect entries obey ``{a_ij, a_kl} = delta_jk a_il - delta_il a_kj``.
    """
    gf = _grad(f, state, h)
    gg = _grad(g, state, h)
    k = state.Nsites * state.m
    fx, fX = gf[:k], gf[k : 2 * k]
    gx, gX = gg[:k], gg[k : 2 * k]
    total = -np.sum(fx * gX - fX * gx)
    if state.defect is not None:
        N = state.N
        A = state.defect.matrix()
        Fa = gf[2 * k :].reshape(N, N)
        Ga = gg[2 * k :].reshape(N, N)
        # sum over F_ij G_kl (delta_jk A_il - delta_il A_kj)
        total += np.einsum("ij,jl,il->", Fa, Ga, A) - np.einsum("ij,ki,kj->", Fa, Ga, A)
    return complex(total)


def charge_functional(index: int) -> Callable[[LatticeState], complex]:
    def f(s: LatticeState) -> complex:
        return charges(s).as_array()[index - 1]

    return f
