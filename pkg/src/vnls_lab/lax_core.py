"""Continuous vector NLS Lax pair, fundamental solutions and PDE residuals.

Fields are complex vectors with ``N - 1`` components.  Most builders accept
batched input: a field array of shape ``(..., N-1)`` produces matrices of shape
``(..., N, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ExponentOverflow, GridTooSmall, IntegrationError

FieldClosure = Callable[[np.ndarray, np.ndarray], np.ndarray]

EXPONENT_CAP = 700.0


@dataclass(frozen=True)
class LaxParams:
    N: int
    kappa: int
    rho: float
    a: float
    alpha: complex
    beta: complex
    Q: np.ndarray

    @property
    def ncomp(self) -> int:
        return self.N - 1

    @property
    def sqrt_kappa(self) -> complex:
        return self.beta

    def U1(self) -> np.ndarray:
        d = np.full(self.N, self.alpha * self.rho, dtype=complex)
        d[-1] = -self.alpha
        return np.diag(d)

    def U1_diag(self) -> np.ndarray:
        return np.diag(self.U1()).copy()

    def with_beta(self, beta: complex) -> "LaxParams":
        """Copy with a replaced coupling constant (used to build broken operators in tests)."""
        return LaxParams(self.N, self.kappa, self.rho, self.a, self.alpha, complex(beta), self.Q)


def make_params(N: int, kappa: int) -> LaxParams:
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N!r}")
    if kappa not in (1, -1):
        raise ValueError(f"kappa must be +1 or -1, got {kappa!r}")
    N = int(N)
    rho = 1.0 / (N - 1)
    a = (1.0 - N) / N
    alpha = 1j * a
    beta = complex(np.sqrt(complex(kappa)))
    Q = np.eye(N)
    Q[-1, -1] = -kappa
    return LaxParams(N=N, kappa=int(kappa), rho=rho, a=a, alpha=alpha, beta=beta, Q=Q)


def _as_field(p: LaxParams, u) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape[-1:] != (p.ncomp,):
        raise ValueError(f"field must have trailing dimension {p.ncomp}, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite values")
    return u


def _U0(p: LaxParams, u: np.ndarray) -> np.ndarray:
    out = np.zeros(u.shape[:-1] + (p.N, p.N), dtype=complex)
    out[..., :-1, -1] = p.beta * np.conj(u)
    out[..., -1, :-1] = p.beta * u
    return out


def _V0(p: LaxParams, u: np.ndarray, u_x: np.ndarray) -> np.ndarray:
    k = p.kappa
    out = np.zeros(u.shape[:-1] + (p.N, p.N), dtype=complex)
    out[..., :-1, :-1] = 1j * k * np.conj(u)[..., :, None] * u[..., None, :]
    out[..., :-1, -1] = -1j * p.beta * np.conj(u_x)
    out[..., -1, :-1] = 1j * p.beta * u_x
    out[..., -1, -1] = -1j * k * np.sum(np.abs(u) ** 2, axis=-1)
    return out


def _lam(lam, batch_shape):
    lam = np.asarray(lam, dtype=complex)
    return lam.reshape(lam.shape + (1, 1)) if lam.ndim else lam


def build_U(p: LaxParams, u, lam) -> np.ndarray:
    """Spatial Lax matrix ``lam * U1 + U0(u)``."""
    u = _as_field(p, u)
    lam = _lam(lam, u.shape[:-1])
    return lam * p.U1() + _U0(p, u)


def build_V(p: LaxParams, u, u_x, lam) -> np.ndarray:
    """Temporal Lax matrix ``-lam^2 U1 - lam U0 + V0``."""
    u = _as_field(p, u)
    u_x = _as_field(p, u_x)
    lam = _lam(lam, u.shape[:-1])
    return -(lam**2) * p.U1() - lam * _U0(p, u) + _V0(p, u, u_x)


def _involution(p: LaxParams, A: np.ndarray) -> np.ndarray:
    return p.Q @ np.conj(np.swapaxes(A, -1, -2)) @ p.Q


def reduction_residual(p: LaxParams, u, lam) -> float:
    """Frobenius norm of ``U(lam) + Q U(lam*)^dagger Q``."""
    lam = complex(lam)
    U = build_U(p, u, lam)
    Uc = build_U(p, u, np.conj(lam))
    return float(np.max(np.linalg.norm(U + _involution(p, Uc), axis=(-2, -1))))


def reduction_residual_V(p: LaxParams, u, u_x, lam) -> float:
    lam = complex(lam)
    V = build_V(p, u, u_x, lam)
    Vc = build_V(p, u, u_x, np.conj(lam))
    return float(np.max(np.linalg.norm(V + _involution(p, Vc), axis=(-2, -1))))


def vacuum_exponent(p: LaxParams, mu, x, t) -> np.ndarray:
    """Diagonal of ``mu U1 x - mu^2 U1 t``; shape ``broadcast(mu, x, t) + (N,)``."""
    mu, x, t = np.broadcast_arrays(np.asarray(mu, dtype=complex), np.asarray(x, float), np.asarray(t, float))
    d = p.U1_diag()
    return (mu * x - mu**2 * t)[..., None] * d


def vacuum_fundamental(p: LaxParams, mu, x, t, cap: float = EXPONENT_CAP) -> np.ndarray:
    """Fundamental matrix of the zero-field linear problem, normalized to 1 at the origin."""
    e = vacuum_exponent(p, mu, x, t)
    # The modulus of each entry is exp(Re e); that is what overflows.
    if np.any(np.abs(e.real) > cap):
        worst = float(np.max(np.abs(e.real)))
        raise ExponentOverflow(f"vacuum exponent {worst:.1f} exceeds cap {cap}")
    d = np.exp(e)
    out = np.zeros(d.shape + (p.N,), dtype=complex)
    idx = np.arange(p.N)
    out[..., idx, idx] = d
    return out


def closure_derivative_x(u: FieldClosure, x, t, h: float = 1e-3) -> np.ndarray:
    """Fourth-order central difference of a closure in x."""
    return (
        -u(x + 2 * h, t) + 8 * u(x + h, t) - 8 * u(x - h, t) + u(x - 2 * h, t)
    ) / (12 * h)


def _rk4_path(M_of_s: Callable[[float], np.ndarray], Psi0: np.ndarray, s1: float, n_steps: int) -> np.ndarray:
    if s1 == 0.0:
        return Psi0
    h = s1 / n_steps
    if abs(h) < 1e-14:
        raise IntegrationError("step size underflow")
    Psi = Psi0
    s = 0.0
    for _ in range(n_steps):
        k1 = M_of_s(s) @ Psi
        k2 = M_of_s(s + h / 2) @ (Psi + h / 2 * k1)
        k3 = M_of_s(s + h / 2) @ (Psi + h / 2 * k2)
        k4 = M_of_s(s + h) @ (Psi + h * k3)
        Psi = Psi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += h
    if not np.all(np.isfinite(Psi)):
        raise IntegrationError("fundamental solution became non-finite")
    return Psi


def _checked(u: FieldClosure, x, t) -> np.ndarray:
    v = np.asarray(u(x, t), dtype=complex)
    if not np.all(np.isfinite(v)):
        raise IntegrationError(f"non-finite field value at x={x}, t={t}")
    return v


def numeric_fundamental(
    p: LaxParams,
    u: FieldClosure,
    mu: complex,
    x: float,
    t: float,
    n_steps: int = 200,
    x_first: bool = False,
) -> np.ndarray:
    """RK4 integration of the linear problem from the origin.

    The default path goes along t at x = 0 and then along x at fixed t.
    ``x_first=True`` takes the other leg order.
    """
    mu = complex(mu)
    I = np.eye(p.N, dtype=complex)

    def Ux(xx, tt):
        return build_U(p, _checked(u, xx, tt), mu)

    def Vt(xx, tt):
        return build_V(p, _checked(u, xx, tt), closure_derivative_x(u, xx, tt), mu)

    if x_first:
        Psi = _rk4_path(lambda s: Ux(s, 0.0), I, float(x), n_steps)
        return _rk4_path(lambda s: Vt(float(x), s), Psi, float(t), n_steps)
    Psi = _rk4_path(lambda s: Vt(0.0, s), I, float(t), n_steps)
    return _rk4_path(lambda s: Ux(s, float(t)), Psi, float(x), n_steps)


def path_swap_discrepancy(p: LaxParams, u: FieldClosure, mu, x, t, n_steps: int = 200) -> float:
    """Distance between the t-then-x and x-then-t integrations."""
    A = numeric_fundamental(p, u, mu, x, t, n_steps)
    B = numeric_fundamental(p, u, mu, x, t, n_steps, x_first=True)
    return float(np.linalg.norm(A - B))


@dataclass
class FieldGrid:
    x0: float
    dx: float
    nx: int
    t0: float
    dt: float
    nt: int
    values: np.ndarray  # shape (nt, nx, ncomp)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim == 2:
            self.values = self.values[..., None]
        if self.values.shape[:2] != (self.nt, self.nx):
            raise ValueError(f"values shape {self.values.shape} does not match nt={self.nt}, nx={self.nx}")
        if self.dx <= 0 or self.dt <= 0:
            raise ValueError("dx and dt must be positive")
        if self.nx < 5 or self.nt < 3:
            raise GridTooSmall(f"need nx >= 5 and nt >= 3, got nx={self.nx}, nt={self.nt}")

    @property
    def ncomp(self) -> int:
        return self.values.shape[-1]

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.nt)

    def congruent(self, other: "FieldGrid") -> bool:
        return (self.x0, self.dx, self.nx, self.t0, self.dt, self.nt) == (
            other.x0, other.dx, other.nx, other.t0, other.dt, other.nt,
        )

    def with_values(self, values) -> "FieldGrid":
        return FieldGrid(self.x0, self.dx, self.nx, self.t0, self.dt, self.nt, values)

    @classmethod
    def sample(cls, u: FieldClosure, x0, dx, nx, t0, dt, nt) -> "FieldGrid":
        """Evaluate a closure on the grid; closures are called once with broadcast arrays."""
        x = x0 + dx * np.arange(nx)
        t = t0 + dt * np.arange(nt)
        T, X = np.meshgrid(t, x, indexing="ij")
        return cls(x0, dx, nx, t0, dt, nt, np.asarray(u(X, T), dtype=complex))

    @classmethod
    def centered(cls, u: FieldClosure, xlim, dx, t_center, dt, nt=5) -> "FieldGrid":
        """Grid over ``xlim`` with ``nt`` time levels centred on ``t_center``."""
        nx = int(round((xlim[1] - xlim[0]) / dx)) + 1
        t0 = t_center - dt * (nt - 1) / 2
        return cls.sample(u, xlim[0], dx, nx, t0, dt, nt)


def dx4(f: np.ndarray, dx: float, axis: int) -> np.ndarray:
    """Fourth-order first derivative on interior points (two dropped at each end)."""
    f = np.moveaxis(f, axis, 0)
    d = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * dx)
    return np.moveaxis(d, 0, axis)


def dxx4(f: np.ndarray, dx: float, axis: int) -> np.ndarray:
    """Fourth-order second derivative on interior points."""
    f = np.moveaxis(f, axis, 0)
    d = (-f[4:] + 16 * f[3:-1] - 30 * f[2:-2] + 16 * f[1:-3] - f[:-4]) / (12 * dx**2)
    return np.moveaxis(d, 0, axis)


def dt2(f: np.ndarray, dt: float, axis: int) -> np.ndarray:
    """Second-order central first derivative on interior points (one dropped at each end)."""
    f = np.moveaxis(f, axis, 0)
    d = (f[2:] - f[:-2]) / (2 * dt)
    return np.moveaxis(d, 0, axis)


def vnls_residual(g: FieldGrid, kappa: int) -> np.ndarray:
    """Pointwise norm of ``i u_t + u_xx - 2 kappa |u|^2 u`` on the interior, shape ``(nt-2, nx-4)``."""
    u = g.values
    u_t = dt2(u, g.dt, axis=0)[:, 2:-2]
    u_xx = dxx4(u, g.dx, axis=1)[1:-1]
    uc = u[1:-1, 2:-2]
    mod2 = np.sum(np.abs(uc) ** 2, axis=-1, keepdims=True)
    r = 1j * u_t + u_xx - 2 * kappa * mod2 * uc
    return np.linalg.norm(r, axis=-1)


def zero_curvature_residual(g: FieldGrid, p: LaxParams, lam: complex) -> float:
    """Max over the interior of ``||U_t - V_x + [U, V]||_F``.

    ``u_x`` inside V comes from the 4th-order stencil, so V is known on
    ``nx - 4`` columns and its x-derivative on ``nx - 8``.
    """
    if g.nx < 9 or g.nt < 3:
        raise GridTooSmall(f"zero-curvature residual needs nx >= 9 and nt >= 3, got {g.nx}, {g.nt}")
    u = g.values
    u_x = dx4(u, g.dx, axis=1)
    U = build_U(p, u, lam)
    V = build_V(p, u[:, 2:-2], u_x, lam)
    U_t = dt2(U, g.dt, axis=0)[:, 4:-4]
    V_x = dx4(V, g.dx, axis=1)[1:-1]
    Uc = U[1:-1, 4:-4]
    Vc = V[1:-1, 2:-2]
    R = U_t - V_x + Uc @ Vc - Vc @ Uc
    return float(np.max(np.linalg.norm(R, axis=(-2, -1))))


def convergence_order(steps, errors) -> float:
    """Least-squares slope of log(error) against log(step)."""
    s = np.log(np.asarray(steps, float))
    e = np.log(np.asarray(errors, float))
    return float(np.polyfit(s, e, 1)[0])


def check_purity(u: FieldClosure, x, t, repeats: int = 3) -> bool:
    first = np.asarray(u(x, t))
    return all(np.array_equal(first, np.asarray(u(x, t))) for _ in range(repeats - 1))
