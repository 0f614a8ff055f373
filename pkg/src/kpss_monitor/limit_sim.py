"""Simulation of the limit processes and calibration of the control limit.

Brownian motion is simulated on the uniform grid ``z_i = i/N`` by Donsker's
construction.  For each monitoring time ``s`` on the grid the residual limit
field is

    E(z, s) = B(z) - v(z, s)' s^-1 H^-1 int_0^s v(u, s) B(u) du,
    v(z, s) = (1, z/s, ..., (z/s)^p),

defined for ``0 <= z <= s`` (zero for ``z > s``), and the variance-ratio limit is

    V(s) = s^-2 int_gamma^s (int_0^r E(z, s) dz)^2 K(zeta (r - s)) dr
           ----------------------------------------------------------
                          int_gamma^s E(r, s)^2 dr

All integrals use the trapezoidal rule on the grid.  The long-run scale
``eta`` is set to one because ``V`` does not depend on it.  The chart signals
when the statistic falls to the limit, so the false-alarm probability is
``P(inf_{s in [kappa, 1]} V(s) <= c_R)`` and the control limit is the
``alpha`` quantile of that infimum.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import __version__
from .kernels import Kernel, get_kernel
from .poly_regress import hilbert_inverse

CALIBRATION_FORMAT = "kpss-monitor/calibration"
CALIBRATION_SCHEMA_VERSION = 1
DEFAULT_ALPHAS = (0.01, 0.025, 0.05, 0.1, 0.2, 0.3, 0.5)

DEN_TOL = 1e-14


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``i/N`` with monitoring times ``s`` from ``floor(kappa N)/N`` to 1.

    ``s_stride`` thins the monitoring times (every grid point by default).
    """

    N: int = 1000
    kappa: float = 0.1
    gamma: float = 0.0
    s_stride: int = 1

    def __post_init__(self):
        if self.N < 200:
            raise ValueError(f"grid size N must be at least 200, got {self.N}")
        if not 0.0 < self.kappa < 1.0 or not 0.0 <= self.gamma < self.kappa:
            raise ValueError("need 0 <= gamma < kappa < 1")
        if self.k_index < 10:
            raise ValueError(f"kappa*N = {self.kappa * self.N:g} leaves fewer than 10 grid points")
        if self.s_stride < 1:
            raise ValueError("s_stride must be positive")

    @property
    def k_index(self) -> int:
        return int(math.floor(self.N * self.kappa + 1e-9))

    @property
    def g_index(self) -> int:
        return int(math.floor(self.N * self.gamma + 1e-9))

    @cached_property
    def z(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N

    @cached_property
    def s_index(self) -> np.ndarray:
        idx = np.arange(self.k_index, self.N + 1, self.s_stride)
        if idx[-1] != self.N:
            idx = np.append(idx, self.N)
        return idx

    @property
    def s(self) -> np.ndarray:
        return self.s_index / self.N

    @property
    def M(self) -> int:
        return len(self.s_index)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate_brownian(N: int, seed=None, refine: int = 1) -> np.ndarray:
    """Brownian motion at ``i/N``, ``i = 0..N``: scaled partial sums of N(0,1) draws.

    With ``refine > 1`` the path is drawn on the finer grid ``i/(refine N)``
    and every ``refine``-th point is kept.  The law is unchanged, but a coarse
    and a fine grid sharing a seed then see the same Brownian path, which
    isolates discretisation error from Monte Carlo error.
    """
    if N < 1 or refine < 1:
        raise ValueError("N and refine must be positive")
    n = N * refine
    steps = _rng(seed).standard_normal(n) / math.sqrt(n)
    return np.concatenate(([0.0], np.cumsum(steps)))[::refine]


def _cumtrapz(values: np.ndarray, dx: float) -> np.ndarray:
    """Cumulative trapezoid along the last axis, starting at 0."""
    out = np.zeros_like(values, dtype=float)
    out[..., 1:] = np.cumsum(0.5 * dx * (values[..., 1:] + values[..., :-1]), axis=-1)
    return out


def moment_functions(brownian, p: int, grid: GridSpec) -> np.ndarray:
    """``int_0^s u^k B(u) du`` for ``k = 0..p`` at every monitoring time; shape ``(p+1, M)``."""
    b = np.asarray(brownian, dtype=float)
    powers = grid.z[None, :] ** np.arange(p + 1)[:, None]
    return _cumtrapz(powers * b[None, :], 1.0 / grid.N)[:, grid.s_index]


def _projection_coeffs(moments: np.ndarray, p: int, grid: GridSpec) -> np.ndarray:
    """``a_k(s)`` with ``E(z, s) = B(z) - sum_k a_k(s) z^k``; shape ``(M, p+1)``.

    ``c(s) = s^-1 H^-1 (M_k(s) / s^k)_k`` and ``a_k(s) = c_k(s) / s^k``.
    """
    s = grid.s
    kk = np.arange(p + 1)
    scaled = moments.T / s[:, None] ** kk[None, :]
    c = scaled @ hilbert_inverse(p).T / s[:, None]
    return c / s[:, None] ** kk[None, :]


def limit_field(brownian, moments, p: int, grid: GridSpec) -> np.ndarray:
    """Residual limit field ``E(z_j, s_m)``, shape ``(M, N+1)``, zero for ``z_j > s_m``."""
    b = np.asarray(brownian, dtype=float)
    a = _projection_coeffs(np.asarray(moments, dtype=float), p, grid)
    powers = grid.z[None, :] ** np.arange(p + 1)[:, None]
    field_ = b[None, :] - a @ powers
    field_[grid.z[None, :] > grid.s[:, None] + 0.5 / grid.N] = 0.0
    return field_


def limit_field_cp(brownian, moments, p: int, grid: GridSpec, theta: float) -> np.ndarray:
    """Change-point field: :func:`limit_field` for ``s < theta`` and zero for ``s >= theta``."""
    if not grid.kappa < theta <= 1.0:
        raise ValueError(f"theta must lie in (kappa, 1], got {theta}")
    field_ = limit_field(brownian, moments, p, grid)
    # exact comparison on grid indices
    field_[grid.s_index >= theta * grid.N - 1e-9] = 0.0
    return field_


@dataclass(frozen=True)
class _Weights:
    num: np.ndarray  # trapezoid weight * kernel on [gamma, s]
    den: np.ndarray  # trapezoid weight on [gamma, s]


def _trapezoid_weights(grid: GridSpec, kernel: Kernel, zeta: float) -> _Weights:
    j = np.arange(grid.N + 1)[None, :]
    lo = grid.g_index
    hi = grid.s_index[:, None]
    w = np.where((j >= lo) & (j <= hi), 1.0 / grid.N, 0.0)
    w = np.where((j == lo) | (j == hi), 0.5 * w, w)
    kern = kernel(zeta * (grid.z[None, :] - grid.s[:, None]))
    return _Weights(num=w * kern, den=w)


def limit_vr(field_, kernel, zeta: float, gamma: float, grid: GridSpec) -> np.ndarray:
    """Variance-ratio limit ``V(s)`` on the monitoring grid from a field ``E(z, s)``.

    ``0/0`` gives 0.  Where the denominator is below ``1e-14`` but the
    numerator is not negligible the value is NaN (a degenerate path).
    """
    kernel = get_kernel(kernel)
    if abs(gamma - grid.gamma) > 1e-12:
        grid = GridSpec(grid.N, grid.kappa, gamma, grid.s_stride)
    f = np.asarray(field_, dtype=float)
    w = _trapezoid_weights(grid, kernel, zeta)
    inner = _cumtrapz(f, 1.0 / grid.N)
    num = np.sum(inner**2 * w.num, axis=1)
    den = np.sum(f**2 * w.den, axis=1)
    return _ratio(num, den, grid.s)


def _ratio(num: np.ndarray, den: np.ndarray, s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    ok = den >= DEN_TOL
    out[ok] = num[ok] / den[ok] / s[ok] ** 2
    out[~ok & (num > DEN_TOL)] = np.nan
    return out


@dataclass
class LimitPath:
    """One simulated trajectory of the limit objects."""

    brownian: np.ndarray
    moments: np.ndarray
    field: np.ndarray
    v_path: np.ndarray
    grid: GridSpec
    theta: float | None = None


def simulate_limit_path(
    grid: GridSpec, p: int, kernel, zeta: float, seed=None, theta: float | None = None
) -> LimitPath:
    b = simulate_brownian(grid.N, seed)
    mom = moment_functions(b, p, grid)
    if theta is None:
        fld = limit_field(b, mom, p, grid)
    else:
        fld = limit_field_cp(b, mom, p, grid, theta)
    v = limit_vr(fld, kernel, zeta, grid.gamma, grid)
    return LimitPath(b, mom, fld, v, grid, theta)


class _PathEngine:
    """``V(s)`` for a batch of Brownian paths through dense matrix products.

    With ``E(z, s) = B(z) - sum_k a_k(s) z^k`` and, by linearity of the
    trapezoid rule, ``int_0^r E(z, s) dz = IB(r) - sum_k a_k(s) P_k(r)``
    (``IB``, ``P_k`` cumulative trapezoids of ``B`` and ``z^k``), squaring and
    expanding turns both quadratures into products of the fixed weight
    matrices with a handful of per-path vectors.  Same quadrature as
    :func:`limit_vr` up to rounding (about 1e-9 relative).
    """

    def __init__(self, grid: GridSpec, p: int, kernel: Kernel, zeta: float):
        self.grid, self.p = grid, p
        w = _trapezoid_weights(grid, kernel, zeta)
        self.w_num, self.w_den = w.num, w.den
        dx = 1.0 / grid.N
        self.powers = grid.z[None, :] ** np.arange(p + 1)[:, None]
        self.cum_powers = _cumtrapz(self.powers, dx)
        kk = range(p + 1)
        self.num_poly = np.array(
            [[self.w_num @ (self.cum_powers[k] * self.cum_powers[l]) for l in kk] for k in kk]
        )
        self.den_poly = np.array(
            [[self.w_den @ (self.powers[k] * self.powers[l]) for l in kk] for k in kk]
        )
        kk = np.arange(p + 1)
        s = grid.s
        # a = moments . coef_map, per s: a_k(s) = s^-1-k sum_l Hinv_kl s^-l M_l(s)
        self.coef_map = (
            hilbert_inverse(p)[None, :, :]
            / s[:, None, None] ** (1 + kk[None, :, None] + kk[None, None, :])
        )

    def v_paths(self, b: np.ndarray) -> np.ndarray:
        """``b`` has shape ``(n_paths, N+1)``; returns ``(n_paths, M)``."""
        grid, p = self.grid, self.p
        dx = 1.0 / grid.N
        b = np.atleast_2d(b)
        ib = _cumtrapz(b, dx)
        mom = _cumtrapz(b[:, None, :] * self.powers[None], dx)[:, :, grid.s_index]
        a = np.einsum("bls,skl->bsk", mom, self.coef_map)
        num = (self.w_num @ (ib * ib).T).T
        den = (self.w_den @ (b * b).T).T
        for k in range(p + 1):
            num -= 2.0 * a[:, :, k] * (self.w_num @ (ib * self.cum_powers[k]).T).T
            den -= 2.0 * a[:, :, k] * (self.w_den @ (b * self.powers[k]).T).T
        num += np.einsum("bsk,bsl,kls->bs", a, a, self.num_poly)
        den += np.einsum("bsk,bsl,kls->bs", a, a, self.den_poly)
        np.maximum(num, 0.0, out=num)
        return np.stack([_ratio(n, d, grid.s) for n, d in zip(num, den)])

    def v_path(self, b: np.ndarray) -> np.ndarray:
        return self.v_paths(b[None, :])[0]


def _path_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


_BATCH = 256


def _minima_chunk(args) -> np.ndarray:
    grid, p, kernel, zeta, seed, lo, hi, theta, refine = args
    engine = _PathEngine(grid, p, kernel, zeta) if theta is None else None
    out = np.empty(hi - lo)
    for start in range(lo, hi, _BATCH):
        idx = range(start, min(start + _BATCH, hi))
        b = np.stack([simulate_brownian(grid.N, _path_seed(seed, i), refine) for i in idx])
        if engine is not None:
            v = engine.v_paths(b)
        else:
            v = np.stack(
                [
                    limit_vr(limit_field_cp(bb, moment_functions(bb, p, grid), p, grid, theta),
                             kernel, zeta, grid.gamma, grid)
                    for bb in b
                ]
            )
        mins = np.min(v, axis=1)
        mins[np.any(np.isnan(v), axis=1)] = np.nan
        out[start - lo : start - lo + len(idx)] = mins
    return out


def simulate_minima(
    grid: GridSpec,
    p: int,
    kernel,
    zeta: float,
    num_paths: int,
    seed: int,
    workers: int = 1,
    theta: float | None = None,
    refine: int = 1,
) -> np.ndarray:
    """``inf_s V(s)`` for ``num_paths`` independent paths; NaN marks degenerate paths.

    Path ``i`` always draws from the seed sequence ``(seed, i)``, so the
    result does not depend on ``workers``.
    """
    kernel = get_kernel(kernel)
    chunk = max(1, min(2048, -(-num_paths // max(1, workers))))
    jobs = [
        (grid, p, kernel, zeta, seed, lo, min(lo + chunk, num_paths), theta, refine)
        for lo in range(0, num_paths, chunk)
    ]
    if workers <= 1:
        parts = [_minima_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_minima_chunk, jobs))
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass
class CalibrationTable:
    """Quantiles of ``inf V`` for one design, serialisable to JSON.

    ``minima`` keeps the sorted per-path infima so that any ``alpha`` can be
    resolved later; ``quantiles`` maps ``alpha -> c_R`` on a fixed grid.
    """

    kernel: str
    zeta: float
    kappa: float
    gamma: float
    p: int
    N: int
    num_paths: int
    seed: int
    alphas: list[float]
    quantiles: list[float]
    minima: list[float] = field(default_factory=list, repr=False)
    degenerate_paths: int = 0
    refine: int = 1
    library_version: str = __version__

    def c_R(self, alpha: float) -> float:
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        if self.minima:
            return float(np.quantile(np.asarray(self.minima), alpha))
        for a, q in zip(self.alphas, self.quantiles):
            if math.isclose(a, alpha, rel_tol=0, abs_tol=1e-12):
                return q
        raise KeyError(f"alpha={alpha} not in calibration table {self.alphas}")

    def to_dict(self) -> dict:
        d = asdict(self)
        params = {k: d.pop(k) for k in ("kernel", "zeta", "kappa", "gamma", "p")}
        return {
            "format": CALIBRATION_FORMAT,
            "schema_version": CALIBRATION_SCHEMA_VERSION,
            "library_version": d.pop("library_version"),
            "params": params,
            "grid_N": d.pop("N"),
            "num_paths": d.pop("num_paths"),
            "seed": d.pop("seed"),
            "degenerate_paths": d.pop("degenerate_paths"),
            "refine": d.pop("refine"),
            "quantile_grid": [{"alpha": a, "c_R": q} for a, q in zip(d["alphas"], d["quantiles"])],
            "minima": d["minima"],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationTable":
        if d.get("format") != CALIBRATION_FORMAT:
            raise ValueError("not a calibration table document")
        if d.get("schema_version") != CALIBRATION_SCHEMA_VERSION:
            raise ValueError(f"unsupported calibration schema version {d.get('schema_version')}")
        grid = d["quantile_grid"]
        return cls(
            **d["params"],
            N=d["grid_N"],
            num_paths=d["num_paths"],
            seed=d["seed"],
            alphas=[row["alpha"] for row in grid],
            quantiles=[row["c_R"] for row in grid],
            minima=list(d.get("minima", [])),
            degenerate_paths=d.get("degenerate_paths", 0),
            refine=d.get("refine", 1),
            library_version=d.get("library_version", "unknown"),
        )

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CalibrationTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def calibrate(
    kernel,
    zeta: float,
    kappa: float,
    gamma: float,
    p: int,
    alpha=0.05,
    num_paths: int = 5000,
    seed: int = 0,
    N: int = 1000,
    workers: int = 1,
    alphas=DEFAULT_ALPHAS,
    refine: int = 1,
) -> CalibrationTable:
    """Estimate ``c_R = F^-1(alpha)`` from simulated limit paths.

    ``F`` is the distribution of ``inf_{s in [kappa, 1]} V(s)``.  Because the
    chart signals on small values, ``P(inf V <= c_R) = alpha`` is the
    asymptotic false-alarm probability over the horizon.  The empirical
    quantile is the linearly interpolated (type 7) one.  ``alpha`` may be a
    scalar or a sequence; the returned table covers ``alphas`` plus every
    requested level.  ``refine`` is passed to :func:`simulate_brownian`, so
    ``calibrate(N=500, refine=2, seed=s)`` and ``calibrate(N=1000, seed=s)``
    use the same Brownian paths.
    """
    kernel = get_kernel(kernel)
    requested = [alpha] if np.isscalar(alpha) else list(alpha)
    grid = GridSpec(N=N, kappa=kappa, gamma=gamma)
    minima = simulate_minima(grid, p, kernel, zeta, num_paths, seed, workers, refine=refine)
    bad = np.isnan(minima)
    good = np.sort(minima[~bad])
    if len(good) == 0:
        raise ArithmeticError("every simulated path was degenerate")
    levels = sorted(set(map(float, alphas)) | set(map(float, requested)))
    quants = [float(np.quantile(good, a)) for a in levels]
    return CalibrationTable(
        kernel=kernel.kind,
        zeta=float(zeta),
        kappa=float(kappa),
        gamma=float(gamma),
        p=int(p),
        N=int(N),
        num_paths=int(num_paths),
        seed=int(seed),
        alphas=levels,
        quantiles=quants,
        minima=good.tolist(),
        degenerate_paths=int(bad.sum()),
        refine=int(refine),
    )
