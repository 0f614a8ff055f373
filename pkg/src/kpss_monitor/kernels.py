"""Weighting kernels for the partial-sum numerator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("gaussian-paper", "gaussian-normalized", "epanechnikov", "custom-table")

_INV_2PI = 1.0 / (2.0 * np.pi)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Kernel:
    """A nonnegative, bounded weighting function.

    ``gaussian-paper`` is ``exp(-z^2/2) / (2 pi)``, the constant used in the
    original simulation study.  It does not integrate to one, which is
    harmless as long as calibration and monitoring use the same kernel.
    ``custom-table`` interpolates linearly between ``(table_z, table_k)``
    nodes and is zero outside them.
    """

    kind: str = "gaussian-paper"
    table_z: tuple[float, ...] = ()
    table_k: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "custom-table":
            z = np.asarray(self.table_z, dtype=float)
            k = np.asarray(self.table_k, dtype=float)
            if z.ndim != 1 or z.shape != k.shape or len(z) < 2:
                raise ValueError("custom-table kernel needs matching node arrays of length >= 2")
            if np.any(np.diff(z) <= 0):
                raise ValueError("custom-table nodes must be strictly increasing")
            if np.any(k < 0) or not np.all(np.isfinite(k)):
                raise ValueError("custom-table values must be finite and nonnegative")

    def __call__(self, z):
        return eval_kernel(self, z)


def eval_kernel(kernel: Kernel, z):
    """Evaluate ``kernel`` at ``z`` (scalar or array)."""
    z = np.asarray(z, dtype=float)
    kind = kernel.kind
    if kind == "gaussian-paper":
        out = _INV_2PI * np.exp(-0.5 * z * z)
    elif kind == "gaussian-normalized":
        out = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    elif kind == "epanechnikov":
        out = np.where(np.abs(z) <= 1.0, 0.75 * (1.0 - z * z), 0.0)
    else:
        out = np.interp(z, kernel.table_z, kernel.table_k, left=0.0, right=0.0)
    if out.ndim == 0:
        return float(out)
    return out


def get_kernel(kind: str | Kernel) -> Kernel:
    if isinstance(kind, Kernel):
        return kind
    return Kernel(kind)
