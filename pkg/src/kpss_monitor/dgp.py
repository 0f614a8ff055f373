"""Data-generating processes for null and change-point experiments.

Two change-point variants are available:

``sim``
    The random walk stops at ``q``: ``eps_t = sum_{i<=t} u_i`` for ``t < q`` and
    ``eps_t = sum_{i<q} u_i + u_t`` afterwards.  This is the simulation design
    used for the rejection-rate tables.
``cpm``
    ``eps_t = sum_{j=0}^t u_j`` for ``t < q`` and ``eps_t = T^beta_cp u_t``
    afterwards (the level resets; ``beta_cp < 1/2`` lets the post-change scale
    grow slowly with ``T``).

Observations are ``Y_t = sum_k trend_k t^k + delta t 1{t >= q} + eps_t``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter

INNOVATION_KINDS = ("iid-gaussian", "arma11", "arch-inf")
MODES = ("sim", "cpm")

ARMA_BURN_IN = 500
ARCH_WARMUP = 10
# E e^8 for standard normal e; the ARCH moment condition uses xi = e^2
_GAUSS_EIGHTH_MOMENT = 105.0


class SpecError(ValueError):
    """Invalid process parameters."""


def geometric_arch_weights(first: float = 0.1, ratio: float = 0.5, J: int = 100) -> tuple[float, ...]:
    """``b_j = first * ratio^(j-1)``, ``j = 1..J``."""
    return tuple(first * ratio**j for j in range(J))


@dataclass(frozen=True)
class InnovationSpec:
    """Stationary innovations ``u_t``.

    ``arma11``: ``u_t = rho u_{t-1} + xi_t - beta_ma xi_{t-1}``, ``xi_t ~ N(0, sigma^2)``.
    ``arch-inf``: ``u_t = sigma s_t e_t`` with ``s_t^2 = a + sum_{j<=J} b_j (u_{t-j}/sigma)^2``.
    """

    kind: str = "iid-gaussian"
    sigma: float = 1.0
    rho: float = 0.0
    beta_ma: float = 0.0
    a: float = 1.0
    b: tuple[float, ...] = field(default_factory=geometric_arch_weights)

    def __post_init__(self):
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        if self.kind not in INNOVATION_KINDS:
            raise SpecError(f"unknown innovation kind {self.kind!r}")
        if not self.sigma > 0:
            raise SpecError("sigma must be positive")
        if self.kind == "arma11" and not abs(self.rho) < 1:
            raise SpecError(f"ARMA(1,1) needs |rho| < 1, got {self.rho}")
        if self.kind == "arch-inf":
            if self.a <= 0 or any(x < 0 for x in self.b):
                raise SpecError("ARCH needs a > 0 and b_j >= 0")
            if _GAUSS_EIGHTH_MOMENT**0.25 * sum(self.b) >= 1:
                raise SpecError(
                    f"ARCH moment condition fails: (E xi^4)^(1/4) sum b_j = "
                    f"{_GAUSS_EIGHTH_MOMENT ** 0.25 * sum(self.b):.3f} >= 1"
                )


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _arch(spec: InnovationSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    b = np.asarray(spec.b)
    J = len(b)
    burn = J * ARCH_WARMUP
    e = rng.standard_normal(n + burn)
    u = np.zeros(n + burn + J)
    sq = np.zeros(n + burn + J)
    rev_b = b[::-1]
    for t in range(J, n + burn + J):
        var = spec.a + rev_b @ sq[t - J : t]
        u[t] = math.sqrt(var) * e[t - J]
        sq[t] = u[t] * u[t]
    return spec.sigma * u[J + burn :]


def gen_innovations(spec: InnovationSpec, n: int, seed=None) -> np.ndarray:
    """Draw ``u_1..u_n``; ARMA runs 500 presample steps, ARCH ``10 J``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = _rng(seed)
    if spec.kind == "iid-gaussian":
        return spec.sigma * rng.standard_normal(n)
    if spec.kind == "arma11":
        xi = spec.sigma * rng.standard_normal(n + ARMA_BURN_IN)
        return lfilter([1.0, -spec.beta_ma], [1.0, -spec.rho], xi)[ARMA_BURN_IN:]
    return _arch(spec, n, rng)


def long_run_sd(spec: InnovationSpec, n_mc: int = 200_000, seed=12345) -> float:
    """Long-run standard deviation ``eta`` with ``T^-1/2 sum u_i => eta B``.

    Closed form for ``iid-gaussian`` and ``arma11``
    (``eta = sigma |1 - beta_ma| / |1 - rho|``); batch-means Monte Carlo
    estimate for ``arch-inf``.
    """
    if spec.kind == "iid-gaussian":
        return spec.sigma
    if spec.kind == "arma11":
        return spec.sigma * abs(1.0 - spec.beta_ma) / abs(1.0 - spec.rho)
    return batch_means_sd(gen_innovations(spec, n_mc, seed))


def batch_means_sd(u: np.ndarray, n_batches: int | None = None) -> float:
    """Batch-means estimate of the long-run standard deviation of ``u``."""
    u = np.asarray(u, dtype=float)
    n_batches = n_batches or int(math.sqrt(len(u)))
    size = len(u) // n_batches
    sums = u[: size * n_batches].reshape(n_batches, size).sum(axis=1)
    return float(np.sqrt(np.var(sums, ddof=1) / size))


@dataclass(frozen=True)
class ScenarioSpec:
    """One experiment scenario.

    ``change_point`` is the absolute index ``q``; alternatively ``theta`` gives
    ``q = floor(T theta)``.  Both ``None`` means no change.
    """

    T: int = 500
    p: int = 1
    trend: tuple[float, ...] = (0.0, 1.0)
    change_point: int | None = None
    theta: float | None = None
    delta: float = 0.0
    beta_cp: float = 0.0
    mode: str = "sim"
    innovations: InnovationSpec = field(default_factory=InnovationSpec)
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "trend", tuple(float(x) for x in self.trend))
        if isinstance(self.innovations, dict):
            object.__setattr__(self, "innovations", InnovationSpec(**self.innovations))
        if self.mode not in MODES:
            raise SpecError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.T < 1:
            raise SpecError("T must be positive")
        if not 0.0 <= self.beta_cp < 0.5:
            raise SpecError(f"beta_cp must lie in [0, 1/2), got {self.beta_cp}")
        if self.change_point is not None and self.theta is not None:
            raise SpecError("give either change_point or theta, not both")
        q = self.q
        if q is not None:
            lower = self.p + 2 if self.mode == "cpm" else 1
            if not lower <= q <= self.T:
                raise SpecError(f"change point q={q} outside [{lower}, {self.T}]")

    @property
    def q(self) -> int | None:
        if self.change_point is not None:
            return int(self.change_point)
        if self.theta is not None:
            return int(math.floor(self.T * self.theta + 1e-9))
        return None

    def to_dict(self) -> dict:
        return asdict(self)


def trend_values(trend, T: int) -> np.ndarray:
    t = np.arange(1, T + 1, dtype=float)
    return np.polynomial.polynomial.polyval(t, np.asarray(trend, dtype=float))


def gen_errors(spec: ScenarioSpec, seed=None) -> np.ndarray:
    """The error sequence ``eps_1..eps_T``."""
    T, q = spec.T, spec.q
    if spec.mode == "sim":
        u = gen_innovations(spec.innovations, T, seed)
        walk = np.cumsum(u)
        if q is None:
            return walk
        eps = walk.copy()
        level = walk[q - 2] if q >= 2 else 0.0
        eps[q - 1 :] = level + u[q - 1 :]
        return eps
    # cpm: u_0 is drawn too, so eps_1 = u_0 + u_1
    u = gen_innovations(spec.innovations, T + 1, seed)
    walk = np.cumsum(u)[1:]
    if q is None:
        return walk
    eps = walk.copy()
    eps[q - 1 :] = float(T) ** spec.beta_cp * u[q:]
    return eps


def gen_scenario(spec: ScenarioSpec, seed=None) -> np.ndarray:
    """Observations ``Y_1..Y_T`` for ``spec``."""
    y = trend_values(spec.trend, spec.T) + gen_errors(spec, seed)
    q = spec.q
    if q is not None and spec.delta != 0.0:
        t = np.arange(1, spec.T + 1, dtype=float)
        y = y + np.where(t >= q, spec.delta * t, 0.0)
    return y


def scenario_from_dict(d: dict) -> ScenarioSpec:
    d = dict(d)
    if "innovations" in d:
        d["innovations"] = InnovationSpec(**d["innovations"])
    return ScenarioSpec(**d)


def load_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))
