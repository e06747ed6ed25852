"""Autocovariance surfaces, kernel long-run covariance and plug-in bandwidth.

Curve panels are ages x years matrices: column ``t`` is the curve of year ``t``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from os import PathLike

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class KernelSpec:
    """Lag weight function. ``q`` is the kernel order (``inf`` for flat-top)."""

    kind: str = "bartlett"
    q: float = 1
    k1: float = 0.5
    k2: float = 1.0

    def __post_init__(self):
        if self.kind == "bartlett":
            if self.q != 1:
                raise DomainError("the Bartlett kernel has order 1")
        elif self.kind == "flat_top":
            if not self.k2 > self.k1 > 0:
                raise DomainError("flat-top kernel needs k2 > k1 > 0")
        else:
            raise DomainError(f"unknown kernel {self.kind!r}")

    @property
    def support(self) -> float:
        return 1.0 if self.kind == "bartlett" else self.k2

    def integral_sq(self) -> float:
        """Integral of the squared weight function over the real line."""
        if self.kind == "bartlett":
            return 2.0 / 3.0
        return 2.0 * (self.k1 + (self.k2 - self.k1) / 3.0)


BARTLETT = KernelSpec("bartlett", 1)
FLAT_TOP = KernelSpec("flat_top", math.inf)


@dataclass(frozen=True, eq=False)
class CovarianceSurface:
    """Symmetric ``p x p`` surface over the age grid.

    ``kind`` is ``"variance"`` or ``"longrun"``; ``truncated`` marks a
    long-run sum cut at lag ``n - 1``.
    """

    grid: np.ndarray
    values: np.ndarray
    kind: str = "variance"
    bandwidth: float | None = None
    kernel: KernelSpec | None = None
    truncated: bool = False

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0]) if self.grid.size > 1 else 1.0


def kernel_weight(spec: KernelSpec, t):
    """Weight ``W(t)``; vectorised over ``t``."""
    a = np.abs(np.asarray(t, dtype=float))
    if spec.kind == "bartlett":
        w = np.where(a <= 1.0, 1.0 - a, 0.0)
    else:
        ramp = (spec.k2 - a) / (spec.k2 - spec.k1)
        w = np.where(a < spec.k1, 1.0, np.where(a <= spec.k2, ramp, 0.0))
    return w if w.ndim else float(w)


def _panel(Z, min_n=2):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2 or Z.shape[1] < min_n:
        raise DomainError(f"need a curves panel with at least {min_n} years")
    if not np.all(np.isfinite(Z)):
        raise DomainError("panel has missing cells")
    return Z


def _lag_product(Zc, lag):
    # gamma_l(x, u) = (1/n) sum_j z_j(x) z_{j+l}(u)
    n = Zc.shape[1]
    if lag >= 0:
        return Zc[:, : n - lag] @ Zc[:, lag:].T / n
    return (Zc[:, -lag:] @ Zc[:, : n + lag].T) / n


def empirical_autocov(Z, lag: int, *, center: bool = True, grid=None) -> CovarianceSurface:
    """Lag-``lag`` autocovariance surface with divisor ``n``.

    The returned values are not symmetrised: ``gamma_{-l} = gamma_l^T``.
    """
    Z = _panel(Z)
    n = Z.shape[1]
    if abs(lag) >= n:
        raise DomainError(f"|lag| = {abs(lag)} must be below n = {n}")
    Zc = Z - Z.mean(axis=1, keepdims=True) if center else Z
    grid = np.arange(Z.shape[0], dtype=float) if grid is None else np.asarray(grid, dtype=float)
    return CovarianceSurface(grid, _lag_product(Zc, int(lag)), "variance")


def _kernel_sum(Zc, h, spec, power=0):
    """``sum_l W(l/h) |l|^power gamma_l`` and whether it was cut at ``n - 1``."""
    n = Zc.shape[1]
    need = int(math.ceil(spec.support * h)) if h > 0 else 0
    lmax = min(need, n - 1)
    g0 = _lag_product(Zc, 0)
    C = g0.copy() if power == 0 else np.zeros_like(g0)
    for lag in range(1, lmax + 1):
        wt = kernel_weight(spec, lag / h) * lag ** power
        if wt != 0.0:
            g = _lag_product(Zc, lag)
            C += wt * (g + g.T)
    truncated = need > n - 1 and kernel_weight(spec, n / h) > 0
    return 0.5 * (C + C.T), truncated


def longrun_cov(Z, h: float, spec: KernelSpec = BARTLETT, *, center: bool = True,
                grid=None) -> CovarianceSurface:
    """Kernel long-run covariance ``sum_l W(l/h) gamma_l``, symmetrised.

    Lags beyond ``n - 1`` are dropped and the result flagged ``truncated``.
    """
    Z = _panel(Z, 3)
    if not h > 0:
        raise DomainError("bandwidth must be positive")
    Zc = Z - Z.mean(axis=1, keepdims=True) if center else Z
    C, truncated = _kernel_sum(Zc, float(h), spec)
    grid = np.arange(Z.shape[0], dtype=float) if grid is None else np.asarray(grid, dtype=float)
    return CovarianceSurface(grid, C, "longrun", float(h), spec, truncated)


def _trapezoid_weights(p):
    """Trapezoid weights for ``p`` points spread evenly over ``[0, 1]``."""
    if p == 1:
        return np.ones(1)
    w = np.full(p, 1.0 / (p - 1))
    w[[0, -1]] *= 0.5
    return w


def hs_norm_sq(C):
    """Squared Hilbert-Schmidt norm on the unit-rescaled grid."""
    w = _trapezoid_weights(C.shape[0])
    return float(w @ (C * C) @ w)


def trace_integral(C):
    w = _trapezoid_weights(C.shape[0])
    return float(w @ np.diag(C))


def default_h1(n: int) -> float:
    return n ** 0.2


def plugin_bandwidth(Z, pilot: KernelSpec = FLAT_TOP, final: KernelSpec = BARTLETT,
                     h1: float | None = None, *, center: bool = True,
                     return_details: bool = False):
    """Plug-in bandwidth for the final kernel from flat-top pilot estimates.

    Parameters
    ----------
    Z : ndarray, shape (p, n)
    pilot, final : KernelSpec
    h1 : float, optional
        Pilot bandwidth, default ``n ** (1/5)``.

    Returns
    -------
    float, or (float, dict) with the pilot norms when ``return_details``.

    Raises
    ------
    DomainError
        Fewer than 10 years, or vanishing pilot norms ("degenerate series").
    """
    Z = _panel(Z, 10)
    n = Z.shape[1]
    q = final.q
    h1 = default_h1(n) if h1 is None else float(h1)
    Zc = Z - Z.mean(axis=1, keepdims=True) if center else Z
    C0, _ = _kernel_sum(Zc, h1, pilot, 0)
    Cq, _ = _kernel_sum(Zc, h1, pilot, q)
    nq = hs_norm_sq(Cq)
    n0 = hs_norm_sq(C0)
    tr = trace_integral(C0)
    denom = (n0 + tr * tr) * final.integral_sq()
    if not (nq > 0 and denom > 0):
        raise DomainError("degenerate series")
    c0 = (2.0 * q * nq) ** (1.0 / (1 + 2 * q)) * denom ** (-1.0 / (1 + 2 * q))
    h = c0 * n ** (1.0 / (1 + 2 * q))
    if return_details:
        return h, {"c0": c0, "h1": h1, "norm_q": nq, "norm_0": n0, "trace": tr}
    return h


def write_surface(surface: CovarianceSurface, dest) -> None:
    """CSV of the surface with ages as header row and first column."""
    fh, close = (open(dest, "w", newline=""), True) if isinstance(dest, (str, PathLike)) else (dest, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        labels = [f"{a:g}" for a in surface.grid]
        w.writerow(["age", *labels])
        for lab, row in zip(labels, surface.values):
            w.writerow([lab, *(repr(float(v)) for v in row)])
    finally:
        if close:
            fh.close()
