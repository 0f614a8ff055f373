"""Kernel-weighted variance-ratio control chart on sequentially updated residuals.

At every time ``t`` the trend is refit on ``Y_1..Y_t`` and the statistic

    U_t = t^-4 sum_{i=g}^{t} (sum_{j<=i} e_j(t))^2 K((i - t)/h)
          ---------------------------------------------------
                 t^-2 sum_{j=g}^{t} e_j(t)^2

is compared against the control limit ``c_R``.  The chart signals at the first
``t >= k`` with ``U_t <= c_R``.  Small values of ``U_t`` mean the residual
partial sums are short relative to the residuals, i.e. the errors look
stationary rather than integrated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable

import numpy as np

from .kernels import Kernel, get_kernel
from .poly_regress import ResidualState, coefficient_path, update_residuals

NO_SIGNAL = math.inf

# residual vectors below this fraction of max|Y| are treated as exactly zero
DEGENERATE_RTOL = 1e-9


class DegenerateStatisticError(ArithmeticError):
    """Zero residual variance on the monitoring window but nonzero partial sums."""


class InsufficientStreamError(ValueError):
    """The observation stream ended before monitoring could start."""


def _floor_frac(T: int, frac: float) -> int:
    # guard against 0.29 * 100 == 28.999999999999996
    return int(math.floor(T * frac + 1e-9))


@dataclass(frozen=True)
class DetectorConfig:
    """Design of the chart.

    ``k = floor(T kappa)`` is the first monitored time and
    ``g = floor(T gamma)`` the first index of the outer sums.  ``gamma = 0``
    selects ``g = p + 1``, i.e. the outer sums start with the first defined
    residual.  The bandwidth can be given directly (``h``) or through
    ``zeta = T / h`` via :meth:`from_zeta`.
    """

    T: int
    kappa: float
    gamma: float
    h: float
    p: int = 1
    kernel: Kernel = field(default_factory=Kernel)
    c_R: float = 0.0
    infinite_horizon: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kernel", get_kernel(self.kernel))
        if self.T < 1:
            raise ValueError("horizon T must be positive")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not 0.0 <= self.gamma < self.kappa:
            raise ValueError(f"gamma must lie in [0, kappa), got {self.gamma}")
        if self.p < 0:
            raise ValueError("order p must be nonnegative")
        if not self.h > 0:
            raise ValueError("bandwidth h must be positive")
        if self.T / self.h < 1.0:
            raise ValueError(f"T/h must be at least 1, got {self.T / self.h}")
        if self.gamma > 0 and _floor_frac(self.T, self.gamma) < self.p + 1:
            raise ValueError(
                f"floor(T*gamma) = {_floor_frac(self.T, self.gamma)} is below p+1 = {self.p + 1}"
            )
        if self.k <= self.g:
            raise ValueError(f"monitoring start k={self.k} must exceed g={self.g}")

    @classmethod
    def from_zeta(cls, T: int, kappa: float, gamma: float, zeta: float, **kw) -> "DetectorConfig":
        return cls(T=T, kappa=kappa, gamma=gamma, h=T / zeta, **kw)

    @property
    def k(self) -> int:
        return _floor_frac(self.T, self.kappa)

    @property
    def g(self) -> int:
        if self.gamma == 0:
            return self.p + 1
        return _floor_frac(self.T, self.gamma)

    @property
    def zeta(self) -> float:
        return self.T / self.h

    def with_limit(self, c_R: float) -> "DetectorConfig":
        return replace(self, c_R=c_R)


@dataclass
class StoppingResult:
    """Outcome of one monitoring run.

    ``stop_time`` is :data:`NO_SIGNAL` (``inf``) when the chart never fired.
    ``times`` and ``stats`` hold the computed ``(t, U_t)`` pairs.
    """

    stopped: bool
    stop_time: float
    times: np.ndarray
    stats: np.ndarray

    @property
    def statistic_path(self) -> list[tuple[int, float]]:
        return list(zip(self.times.tolist(), self.stats.tolist()))


def variance_ratio(residuals, t: int, g: int, h: float, kernel: Kernel) -> float:
    """``U_t`` from the time-``t`` residual vector ``(e_1(t), ..., e_t(t))``.

    ``0/0`` is defined as 0.

    Raises
    ------
    DegenerateStatisticError
        If the denominator vanishes while the numerator does not.
    """
    e = np.asarray(residuals, dtype=float)[:t]
    if len(e) != t:
        raise ValueError(f"expected {t} residuals, got {len(e)}")
    if not 1 <= g <= t:
        raise ValueError(f"need 1 <= g <= t, got g={g}, t={t}")
    partial = np.cumsum(e)[g - 1 :]
    i = np.arange(g, t + 1)
    weights = kernel((i - t) / h)
    num = float(np.sum(partial**2 * weights)) / float(t) ** 4
    den = float(np.sum(e[g - 1 :] ** 2)) / float(t) ** 2
    if den == 0.0:
        if num == 0.0:
            return 0.0
        raise DegenerateStatisticError(
            f"residual variance vanishes on [{g}, {t}] while partial sums do not"
        )
    return num / den


def _is_degenerate(resid: np.ndarray, y_scale: float) -> bool:
    return float(np.max(np.abs(resid), initial=0.0)) <= DEGENERATE_RTOL * y_scale


def run_monitor(observations: Iterable[float], config: DetectorConfig) -> StoppingResult:
    """Feed observations one at a time and stop at the first ``U_t <= c_R``.

    In finite-horizon mode at most ``T`` observations are consumed; in
    infinite-horizon mode monitoring continues until the stream ends.

    Raises
    ------
    InsufficientStreamError
        Finite-horizon stream shorter than ``k``.
    """
    state = ResidualState(p=config.p)
    k, g = config.k, config.g
    times: list[int] = []
    stats: list[float] = []
    y_scale = 0.0
    stop_time = NO_SIGNAL
    for obs in observations:
        update_residuals(state, obs)
        t = state.t
        y_scale = max(y_scale, abs(float(obs)))
        if t >= k:
            resid = state.residuals
            if _is_degenerate(resid, y_scale):
                resid = np.zeros(t)
            u = variance_ratio(resid, t, g, config.h, config.kernel)
            times.append(t)
            stats.append(u)
            if u <= config.c_R:
                stop_time = t
                break
        if not config.infinite_horizon and t >= config.T:
            break
    if state.t < k and not config.infinite_horizon:
        raise InsufficientStreamError(
            f"stream ended after {state.t} observations, monitoring starts at k={k}"
        )
    return StoppingResult(
        stopped=stop_time != NO_SIGNAL,
        stop_time=stop_time,
        times=np.asarray(times, dtype=int),
        stats=np.asarray(stats, dtype=float),
    )


_CACHE_CELLS = 1 << 22


@lru_cache(maxsize=8)
def _workspace(config: DetectorConfig, n: int, lo: int, hi: int):
    """Observation-independent matrices for rows ``t = ts[lo:hi]``."""
    k, g, p = config.k, config.g, config.p
    tt = np.arange(k, n + 1)[lo:hi]
    tf = tt.astype(float)[:, None]
    j = np.arange(1, n + 1, dtype=float)[None, :]
    inside = j <= tf
    u = np.where(inside, j / tf, 0.0)
    upow = np.stack([u**q for q in range(p + 1)])
    window = inside & (j >= g)
    weights = np.where(window, config.kernel((j - tf) / config.h), 0.0)
    for arr in (inside, upow, window, weights):
        arr.setflags(write=False)
    return tt, inside, upow, window, weights


def statistic_path(observations, config: DetectorConfig) -> tuple[np.ndarray, np.ndarray]:
    """All ``U_t`` for ``t = k..n`` without stopping, vectorised over ``t``.

    ``n`` is ``min(len(observations), T)`` in finite-horizon mode.  The values
    agree with :func:`run_monitor` up to floating-point rounding; the
    Monte Carlo harness uses this path and replays thresholds on it.
    Observation-independent matrices are cached per ``(config, n)``.
    """
    y = np.asarray(observations, dtype=float)
    if not config.infinite_horizon:
        y = y[: config.T]
    n = len(y)
    k, p = config.k, config.p
    if n < k:
        raise InsufficientStreamError(f"need at least k={k} observations, got {n}")
    config = replace(config, c_R=0.0)  # the limit does not enter; share the cache
    gam = coefficient_path(y, p, k)
    n_t = n - k + 1
    out = np.empty(n_t)
    y_scale = np.maximum.accumulate(np.abs(y))
    rows = max(1, _CACHE_CELLS // (n * (p + 2)))
    for lo in range(0, n_t, rows):
        hi = min(lo + rows, n_t)
        tt, inside, upow, window, weights = _workspace(config, n, lo, hi)
        tf = tt.astype(float)
        resid = np.where(inside, y[None, :], 0.0)
        for q in range(p + 1):
            resid -= upow[q] * gam[lo:hi, q, None]
        partial = np.cumsum(resid, axis=1)
        num = np.einsum("rj,rj->r", partial * partial, weights) / tf**4
        den = np.einsum("rj,rj->r", resid * resid, window) / tf**2
        degenerate = np.max(np.abs(resid), axis=1) <= DEGENERATE_RTOL * y_scale[tt - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = num / den
        vals[degenerate] = 0.0
        bad = ~degenerate & (den == 0.0)
        if np.any(bad & (num > 0.0)):
            raise DegenerateStatisticError("residual variance vanishes while partial sums do not")
        vals[bad] = 0.0
        out[lo:hi] = vals
    return np.arange(k, n + 1), out


def first_crossing(times: np.ndarray, stats: np.ndarray, c_R: float) -> float:
    """First ``t`` with ``U_t <= c_R`` or :data:`NO_SIGNAL`."""
    hit = np.flatnonzero(stats <= c_R)
    if len(hit) == 0:
        return NO_SIGNAL
    return int(times[hit[0]])


def monitor_fast(observations, config: DetectorConfig) -> StoppingResult:
    """:func:`run_monitor` computed through :func:`statistic_path`."""
    times, stats = statistic_path(observations, config)
    stop = first_crossing(times, stats, config.c_R)
    if stop == NO_SIGNAL:
        return StoppingResult(False, NO_SIGNAL, times, stats)
    keep = times <= stop
    return StoppingResult(True, stop, times[keep], stats[keep])


def carl(results: Iterable[StoppingResult]) -> float | None:
    """Conditional average run length: mean stop time of the runs that signalled.

    ``None`` if no run signalled.
    """
    stops = [r.stop_time for r in results if r.stopped]
    if not stops:
        return None
    return float(np.mean(stops))
