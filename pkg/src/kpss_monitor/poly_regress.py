"""Polynomial least squares with sequentially updated residuals.

The regressors are ``x_t = (1, t, ..., t**p)`` for ``t = 1, 2, ...``.  Normal
equations are solved on the column-scaled design ``X W_t`` with
``W_t = diag(1, 1/t, ..., 1/t**p)``; its Gram matrix is close to ``t * H``
(``H`` the Hilbert matrix), so the conditioning stays that of ``H`` instead of
growing like ``t**(2p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

MAX_ORDER = 10


class OrderOverflowError(ValueError):
    """Polynomial order too large for the exact closed-form Hilbert inverse."""


class InsufficientDataError(ValueError):
    """Fewer observations than regression coefficients."""


def hilbert_matrix(p: int, exact: bool = False):
    """Hilbert matrix ``H_ij = 1/(i+j-1)`` of dimension ``p+1``.

    With ``exact=True`` a nested list of :class:`fractions.Fraction` is returned.
    """
    n = p + 1
    if exact:
        return [[Fraction(1, i + j + 1) for j in range(n)] for i in range(n)]
    i = np.arange(n)
    return 1.0 / (i[:, None] + i[None, :] + 1.0)


def hilbert_inverse(p: int, exact: bool = False):
    """Inverse of the ``(p+1)``-dimensional Hilbert matrix in closed form.

    ``(H^-1)_ij = (-1)^(i+j) (i+j-1) C(p+i, p+1-j) C(p+j, p+1-i) C(i+j-2, i-1)^2``
    with 1-based ``i, j``.  Every entry is an integer; for ``p <= 10`` all of
    them fit in 53 bits, so the float result is exact as well.

    Parameters
    ----------
    p : int
        Polynomial order, ``0 <= p <= 10``.
    exact : bool
        Return a nested list of Python ints instead of a float array.

    Raises
    ------
    OrderOverflowError
        If ``p > 10``.
    """
    if p < 0:
        raise ValueError(f"order must be nonnegative, got {p}")
    if p > MAX_ORDER:
        raise OrderOverflowError(
            f"closed-form Hilbert inverse is limited to p <= {MAX_ORDER}, got {p}"
        )
    n = p + 1
    inv = [
        [
            (-1) ** (i + j)
            * (i + j - 1)
            * comb(p + i, p + 1 - j)
            * comb(p + j, p + 1 - i)
            * comb(i + j - 2, i - 1) ** 2
            for j in range(1, n + 1)
        ]
        for i in range(1, n + 1)
    ]
    if exact:
        return inv
    return np.array(inv, dtype=float)


def design_matrix(n: int, p: int) -> np.ndarray:
    """Rows ``(1, t, ..., t**p)`` for ``t = 1..n``."""
    t = np.arange(1, n + 1, dtype=float)
    return t[:, None] ** np.arange(p + 1)[None, :]


def weight_matrix(t: int, p: int) -> np.ndarray:
    """``W_t = diag(1, t^-1, ..., t^-p)``."""
    return np.diag(float(t) ** -np.arange(p + 1, dtype=float))


def _scaled_design(n: int, p: int) -> np.ndarray:
    # X_n W_n, columns (j/n)**k; entries lie in (0, 1]
    u = np.arange(1, n + 1, dtype=float) / n
    return u[:, None] ** np.arange(p + 1)[None, :]


def _solve_scaled(y: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Scaled coefficients ``gamma = W_t^-1 beta`` and the residual vector.

    Normal equations in double precision, then two refinement steps whose
    residuals are accumulated in extended precision.  Without them the
    residuals lose orthogonality to the high powers of ``t`` for ``p >= 3``.
    """
    xs = _scaled_design(len(y), p)
    gram = xs.T @ xs
    gamma = np.linalg.solve(gram, xs.T @ y).astype(np.longdouble)
    xs_ext = xs.astype(np.longdouble)
    y_ext = y.astype(np.longdouble)
    for _ in range(2):
        resid = y_ext - xs_ext @ gamma
        step = np.linalg.solve(gram, (xs_ext.T @ resid).astype(float))
        gamma += step.astype(np.longdouble)
    resid = y_ext - xs_ext @ gamma
    return gamma.astype(float), resid.astype(float)


def _fit_scaled(y: np.ndarray, p: int) -> np.ndarray:
    return _solve_scaled(y, p)[0]


def fit_ls(observations, p: int) -> np.ndarray:
    """Least squares coefficients ``(beta_0, ..., beta_p)`` of a polynomial trend.

    Raises
    ------
    InsufficientDataError
        If fewer than ``p+1`` observations are given.
    """
    y = np.asarray(observations, dtype=float)
    t = len(y)
    if t < p + 1:
        raise InsufficientDataError(f"need at least {p + 1} observations, got {t}")
    gamma = _fit_scaled(y, p)
    return gamma * float(t) ** -np.arange(p + 1, dtype=float)


def batch_residuals(observations, p: int) -> np.ndarray:
    """Residual vector ``(eps_1(t), ..., eps_t(t))`` of one fit on all data.

    All zeros while ``t < p+1``.
    """
    y = np.asarray(observations, dtype=float)
    t = len(y)
    if t < p + 1:
        return np.zeros(t)
    return _solve_scaled(y, p)[1]


@dataclass
class ResidualState:
    """Observations seen so far and the residuals of the current fit."""

    p: int
    observations: list[float] = field(default_factory=list)
    coeffs: np.ndarray | None = None
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def t(self) -> int:
        return len(self.observations)


def update_residuals(state: ResidualState, new_obs: float) -> ResidualState:
    """Append one observation and recompute every residual from a full refit.

    The state is modified in place and returned.
    """
    state.observations.append(float(new_obs))
    t = state.t
    p = state.p
    if t < p + 1:
        state.coeffs = None
        state.residuals = np.zeros(t)
        return state
    y = np.asarray(state.observations)
    gamma, resid = _solve_scaled(y, p)
    state.coeffs = gamma * float(t) ** -np.arange(p + 1, dtype=float)
    state.residuals = resid
    return state


def residuals_no_update(observations, p: int) -> np.ndarray:
    """Residuals that are never revised: entry ``t`` is the last residual of the time-``t`` fit.

    Entries for ``t < p+1`` are zero.
    """
    y = np.asarray(observations, dtype=float)
    out = np.zeros(len(y))
    for t in range(p + 1, len(y) + 1):
        out[t - 1] = _solve_scaled(y[:t], p)[1][-1]
    return out


def coefficient_path(observations, p: int, start: int) -> np.ndarray:
    """Scaled coefficients ``gamma_t = W_t^-1 beta_t`` for every ``t = start..n``.

    Batched over ``t``: the scaled Gram matrices and moment vectors come from
    cumulative power sums, so the whole path costs one pass over the data plus
    ``n`` small solves.  Agrees with :func:`fit_ls` up to rounding.

    Returns an array of shape ``(n - start + 1, p + 1)``.
    """
    y = np.asarray(observations, dtype=float)
    n = len(y)
    start = max(start, p + 1)
    if start > n:
        return np.zeros((0, p + 1))
    j = np.arange(1, n + 1, dtype=float)
    powers = np.arange(2 * p + 1)
    power_sums = np.cumsum(j[:, None] ** powers[None, :], axis=0)
    moments = np.cumsum(j[:, None] ** powers[None, : p + 1] * y[:, None], axis=0)
    ts = np.arange(start, n + 1)
    tf = ts.astype(float)[:, None]
    scaled_sums = power_sums[ts - 1] / tf ** powers[None, :]
    a = np.arange(p + 1)
    gram = scaled_sums[:, a[:, None] + a[None, :]]
    rhs = moments[ts - 1] / tf ** a[None, :]
    return np.linalg.solve(gram, rhs[..., None])[..., 0]
