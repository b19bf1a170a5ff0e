"""Bäcklund-transformation residuals between two sampled fields.

The square root ``eta`` is double valued.  Pointwise coefficients use the
principal branch; the residuals use ``eta`` continued along the grid, so that
``branch=+1`` picks one analytic sheet on the whole grid instead of flipping
wherever the principal value jumps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoint
from .lax_core import FieldGrid, LaxParams, build_U, dt2, dx4

DEGENERATE_TOL = 1e-14


@dataclass
class BtPair:
    u: FieldGrid
    u_tilde: FieldGrid
    mu: complex
    kappa: int
    branch: int = 1

    def __post_init__(self):
        if not self.u.congruent(self.u_tilde):
            raise ValueError("the two grids must be congruent")
        if complex(self.mu).imag == 0:
            raise ValueError("mu must have a nonzero imaginary part")
        if self.kappa not in (1, -1) or self.branch not in (1, -1):
            raise ValueError("kappa and branch must be +1 or -1")
        self.mu = complex(self.mu)

    def flipped(self) -> "BtPair":
        return BtPair(self.u, self.u_tilde, self.mu, self.kappa, -self.branch)

    @property
    def w(self) -> np.ndarray:
        return self.u_tilde.values - self.u.values


@dataclass
class BtCoefficients:
    d: complex
    eta: complex


def coefficients_from_modulus(mu: complex, kappa: int, w2, branch: int = 1, eta=None):
    """``(d, eta)`` for a given ``|u_tilde - u|^2``; principal ``eta`` unless one is supplied."""
    half = (np.conj(mu) - mu) / 2
    if eta is None:
        eta = np.sqrt(half**2 - kappa * np.asarray(w2, dtype=complex))
    d = half / kappa + branch * eta
    return d, eta


def quadratic_residual(mu: complex, kappa: int, w2, d) -> np.ndarray:
    return np.abs(kappa * d**2 - (np.conj(mu) - mu) * d + w2)


def _index(grid: FieldGrid, x: float, t: float):
    i = int(round((x - grid.x0) / grid.dx))
    k = int(round((t - grid.t0) / grid.dt))
    if not (0 <= i < grid.nx and 0 <= k < grid.nt):
        raise IndexError(f"({x}, {t}) lies outside the grid")
    if abs(grid.x[i] - x) > 1e-9 * max(1.0, abs(x)) or abs(grid.t[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"({x}, {t}) is not a grid point")
    return k, i


def bt_coefficients(pair: BtPair, x: float, t: float) -> BtCoefficients:
    k, i = _index(pair.u, x, t)
    w2 = float(np.sum(np.abs(pair.w[k, i]) ** 2))
    if np.sqrt(w2) < DEGENERATE_TOL:
        raise DegeneratePoint(f"u_tilde equals u at ({x}, {t})")
    d, eta = coefficients_from_modulus(pair.mu, pair.kappa, w2, pair.branch)
    return BtCoefficients(d=complex(d), eta=complex(eta))


def _pick_sign(prev1, prev2, cand):
    guess = prev1 if prev2 is None else 2 * prev1 - prev2
    return np.where(np.abs(cand - guess) <= np.abs(-cand - guess), cand, -cand)


def _continue_along(values: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Choose signs of ``values`` (axis 0) to follow the linear extrapolant; ``start`` is row 0."""
    out = np.empty_like(values)
    out[0] = start
    for k in range(1, values.shape[0]):
        out[k] = _pick_sign(out[k - 1], out[k - 2] if k >= 2 else None, values[k])
    return out


def continued_eta(pair: BtPair) -> np.ndarray:
    """``eta`` on the grid, continued along t at the first column and then along each row in x."""
    w2 = np.sum(np.abs(pair.w) ** 2, axis=-1)
    _, eta = coefficients_from_modulus(pair.mu, pair.kappa, w2)
    first_col = _continue_along(eta[:, 0], eta[0, 0])
    rows = _continue_along(eta.T, first_col)
    return rows.T


def cut_crossings(pair: BtPair) -> np.ndarray:
    """Mask of grid points where the principal ``eta`` jumps by more than ``|eta|/2`` from its x-neighbour."""
    w2 = np.sum(np.abs(pair.w) ** 2, axis=-1)
    _, eta = coefficients_from_modulus(pair.mu, pair.kappa, w2)
    jump = np.abs(np.diff(eta, axis=1)) > np.abs(eta[:, 1:]) / 2
    mask = np.zeros(eta.shape, bool)
    mask[:, 1:] = jump
    return mask


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def _interior_parts(pair: BtPair):
    g = pair.u
    u, ut = pair.u.values, pair.u_tilde.values
    w = ut - u
    w2 = np.sum(np.abs(w) ** 2, axis=-1, keepdims=True)
    degenerate = np.sqrt(w2[..., 0]) < DEGENERATE_TOL
    eta = continued_eta(pair)[..., None]
    half = (np.conj(pair.mu) - pair.mu) / 2
    with np.errstate(all="ignore"):
        ratio_x = (np.sum(np.abs(ut) ** 2, axis=-1, keepdims=True) - _dot(ut, np.conj(u))) / w2
    return g, u, ut, w, w2, degenerate, eta, half, ratio_x


def bt_x_residual(pair: BtPair) -> np.ndarray:
    """Pointwise norm of the x-part relation on ``(nt, nx-4)``; degenerate points are NaN."""
    g, u, ut, w, w2, degenerate, eta, half, ratio = _interior_parts(pair)
    s = pair.branch
    sl = np.s_[:, 2:-2]
    w_x = dx4(w, g.dx, axis=1)
    r = (
        1j * w_x
        + pair.mu * w[sl]
        - (half + s * eta[sl]) * u[sl]
        + ratio[sl] * (half - s * eta[sl]) * w[sl]
    )
    out = np.linalg.norm(r, axis=-1)
    out[degenerate[sl]] = np.nan
    return out


def bt_t_residual(pair: BtPair) -> np.ndarray:
    """Pointwise norm of the t-part relation on ``(nt-2, nx-4)``; degenerate points are NaN."""
    g, u, ut, w, w2, degenerate, eta, half, _ = _interior_parts(pair)
    s, k = pair.branch, pair.kappa
    sl = np.s_[1:-1, 2:-2]
    w_t = dt2(w, g.dt, axis=0)[:, 2:-2]
    w_x = dx4(w, g.dx, axis=1)[1:-1]
    ut_x = dx4(ut, g.dx, axis=1)[1:-1]
    u_x = dx4(u, g.dx, axis=1)[1:-1]
    uu, uut, ww, e = u[sl], ut[sl], w[sl], eta[sl]
    with np.errstate(all="ignore"):
        ratio = (_dot(ut_x, np.conj(uut)) - _dot(ut_x, np.conj(uu))) / w2[sl]
    r = (
        1j * w_t
        + 1j * pair.mu * w_x
        + 1j * ratio * (half - s * e) * ww
        - k * np.sum(np.abs(uut) ** 2, axis=-1, keepdims=True) * ww
        - k * (_dot(uut, np.conj(uu)) - np.sum(np.abs(uu) ** 2, axis=-1, keepdims=True)) * uu
        - 1j * (half + s * e) * u_x
    )
    out = np.linalg.norm(r, axis=-1)
    out[degenerate[sl]] = np.nan
    return out


def max_residual(r: np.ndarray) -> float:
    if np.all(np.isnan(r)):
        raise DegeneratePoint("every grid point is degenerate")
    return float(np.nanmax(r))


def best_branch(pair: BtPair) -> int:
    """Branch sign with the smaller combined x and t residual."""
    scores = {}
    for s in (1, -1):
        trial = BtPair(pair.u, pair.u_tilde, pair.mu, pair.kappa, s)
        scores[s] = max_residual(bt_x_residual(trial)) + max_residual(bt_t_residual(trial))
    return min(scores, key=scores.get)


def q_reconstruction_check(pair: BtPair, x: float, t: float, d=None) -> float:
    """``| |q|^2 + |w|^2 / d^2 |`` with ``q = w / (i sqrt(kappa) d)``.

    ``d`` defaults to the coefficient of the pair's branch; passing a value
    checks an arbitrary candidate.
    """
    k, i = _index(pair.u, x, t)
    w = pair.w[k, i]
    w2 = float(np.sum(np.abs(w) ** 2))
    if np.sqrt(w2) < DEGENERATE_TOL:
        raise DegeneratePoint(f"u_tilde equals u at ({x}, {t})")
    if d is None:
        d = bt_coefficients(pair, x, t).d
    q = w / (1j * np.sqrt(complex(pair.kappa)) * d)
    return float(abs(np.sum(np.abs(q) ** 2) + w2 / d**2))


def conjugation_identity_residual(p: LaxParams, u, lam: complex) -> float:
    """``|| -U(-lam; u)^T - U(lam; -u*) ||_F``, zero for every input."""
    u = np.asarray(u, dtype=complex)
    lhs = -np.swapaxes(build_U(p, u, -complex(lam)), -1, -2)
    rhs = build_U(p, -np.conj(u), lam)
    return float(np.max(np.linalg.norm(lhs - rhs, axis=(-2, -1))))


def conjugate_reflect(g: FieldGrid, centered: bool = False) -> FieldGrid:
    """``v(x, t) = -conj(u(x, t_mid - (t - t_mid)))`` on the same grid.

    With ``centered=True`` the grid must be symmetric about ``t = 0`` so the
    map is literally ``v(x, t) = -conj(u(x, -t))``.
    """
    if centered:
        t_end = g.t0 + (g.nt - 1) * g.dt
        if abs(g.t0 + t_end) > 1e-12 * max(1.0, abs(g.t0)):
            raise ValueError("grid is not symmetric about t = 0")
    return g.with_values(-np.conj(g.values[::-1]))
