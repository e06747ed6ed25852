"""Principal components of variance or long-run covariance surfaces."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from os import PathLike

import numpy as np

from .errors import DomainError
from .longrun import BARTLETT, FLAT_TOP, CovarianceSurface, empirical_autocov, longrun_cov, plugin_bandwidth

THRESHOLD = 0.85
SYM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BasisDecomposition:
    """Mean curve, ``K`` components (columns of ``components``, ages x K),
    eigenvalues, scores (years x K) and residual curves (ages x years)."""

    ages: np.ndarray
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    scores: np.ndarray
    residuals: np.ndarray
    mode: str
    inner: str = "trapezoid"
    bandwidth: float | None = None
    all_eigenvalues: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.components.shape[1]

    def fitted(self, scores=None) -> np.ndarray:
        """``mean + components @ scores.T`` (ages x rows of ``scores``)."""
        s = self.scores if scores is None else np.atleast_2d(scores)
        return self.mean[:, None] + self.components @ s.T

    def reconstruct(self) -> np.ndarray:
        return self.fitted() + self.residuals


def quadrature_weights(grid, inner: str = "trapezoid") -> np.ndarray:
    """Weights ``q`` with ``<f, g> = sum q f g``."""
    grid = np.asarray(grid, dtype=float)
    p = grid.size
    if inner == "dot" or p == 1:
        return np.ones(p)
    if inner != "trapezoid":
        raise DomainError(f"unknown inner product {inner!r}")
    d = np.diff(grid)
    q = np.zeros(p)
    q[:-1] += d / 2
    q[1:] += d / 2
    return q


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def eigen_decompose(surface: CovarianceSurface, max_K: int | None = None, *,
                    inner: str = "trapezoid"):
    """Eigenpairs of the integral operator with kernel ``surface``.

    Returns eigenvalues (descending, negatives clipped to 0) and component
    curves (columns) that are orthonormal under the chosen inner product.
    Each component's largest-magnitude entry is positive.
    """
    C = np.asarray(surface.values, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DomainError("surface must be square")
    scale = max(1.0, float(np.max(np.abs(C)))) if C.size else 1.0
    if np.max(np.abs(C - C.T)) > SYM_TOL * scale:
        raise DomainError("surface is not symmetric")
    q = quadrature_weights(surface.grid, inner)
    r = np.sqrt(q)
    # operator f -> int C(., u) f(u) du is C diag(q); symmetrise with diag(sqrt q)
    A = r[:, None] * C * r[None, :]
    vals, vecs = np.linalg.eigh(0.5 * (A + A.T))
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order] / r[:, None]
    vecs = _fix_signs(vecs)
    if max_K is not None:
        vals, vecs = vals[:max_K], vecs[:, :max_K]
    return vals, vecs


def select_K(eigenvalues, threshold: float = THRESHOLD) -> int:
    """Smallest ``K`` whose leading eigenvalues explain ``threshold`` of the positive total."""
    lam = np.asarray(eigenvalues, dtype=float)
    pos = lam[lam > 0]
    if pos.size == 0:
        raise DomainError("all eigenvalues are zero")
    share = np.cumsum(np.where(lam > 0, lam, 0.0)) / pos.sum()
    return int(np.flatnonzero(share >= threshold - 1e-12)[0]) + 1


def project_scores(Z, mean, components, *, grid=None, inner: str = "trapezoid"):
    """Scores (years x K): inner products of the centred curves with each component."""
    Z = np.asarray(Z, dtype=float)
    components = np.asarray(components, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if components.ndim == 1:
        components = components[:, None]
    mean = np.asarray(mean, dtype=float)
    p = Z.shape[0]
    if components.shape[0] != p or mean.shape != (p,):
        raise DomainError("curves, mean and components must share the age grid")
    grid = np.arange(p, dtype=float) if grid is None else np.asarray(grid, dtype=float)
    if grid.size != p:
        raise DomainError("grid length does not match curves")
    q = quadrature_weights(grid, inner)
    return (Z - mean[:, None]).T @ (q[:, None] * components)


def decompose(Z, mode: str = "static", bandwidth="auto", *, grid=None, inner: str = "trapezoid",
              center: bool = True, threshold: float = THRESHOLD, K: int | None = None,
              max_K: int | None = None, h1: float | None = None) -> BasisDecomposition:
    """Static (lag-0) or dynamic (long-run) principal component decomposition.

    Parameters
    ----------
    Z : ndarray, shape (p, n)
        Curves panel, one column per year.
    mode : {"static", "dynamic"}
    bandwidth : "auto" or float
        Dynamic mode only; ``"auto"`` uses :func:`~dpcr.longrun.plugin_bandwidth`.
    inner : {"trapezoid", "dot"}
    center : bool
        ``False`` keeps a zero mean and uses uncentred second moments.
    K : int, optional
        Fixed number of components instead of the threshold rule.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] < 10:
        raise DomainError("need at least 10 curves")
    if not np.all(np.isfinite(Z)):
        raise DomainError("curves contain missing cells")
    p, n = Z.shape
    grid = np.arange(p, dtype=float) if grid is None else np.asarray(grid, dtype=float)
    mean = Z.mean(axis=1) if center else np.zeros(p)
    if mode not in ("static", "dynamic"):
        raise DomainError(f"unknown mode {mode!r}")
    if not np.any(Z - mean[:, None]):
        # no variation: a flat unit-norm component with zero scores
        q = quadrature_weights(grid, inner)
        phi = np.full((p, 1), 1.0 / np.sqrt(q.sum()))
        return BasisDecomposition(grid, mean, phi, np.zeros(1), np.zeros((n, 1)),
                                  np.zeros((p, n)), mode, inner, None, np.zeros(p))
    h = None
    if mode == "static":
        surface = empirical_autocov(Z, 0, center=center, grid=grid)
    elif mode == "dynamic":
        h = plugin_bandwidth(Z, FLAT_TOP, BARTLETT, h1, center=center) if bandwidth == "auto" \
            else float(bandwidth)
        surface = longrun_cov(Z, h, BARTLETT, center=center, grid=grid)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    if not np.any(np.abs(surface.values) > 0):
        raise DomainError("degenerate series")
    cap = min(n - 1, p, 10) if max_K is None else max_K
    vals, vecs = eigen_decompose(surface, None, inner=inner)
    if K is None:
        K = min(select_K(vals, threshold), cap)
    phi = vecs[:, :K]
    scores = project_scores(Z, mean, phi, grid=grid, inner=inner)
    resid = Z - mean[:, None] - phi @ scores.T
    return BasisDecomposition(grid, mean, phi, vals[:K], scores, resid, mode, inner, h, vals)


def write_components(dec: BasisDecomposition, dest) -> None:
    """CSV with columns age, mean, phi_1..phi_K."""
    fh, close = (open(dest, "w", newline=""), True) if isinstance(dest, (str, PathLike)) else (dest, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["age", "mean", *(f"phi_{k + 1}" for k in range(dec.K))])
        for i, a in enumerate(dec.ages):
            w.writerow([f"{a:g}", repr(float(dec.mean[i])),
                        *(repr(float(v)) for v in dec.components[i])])
    finally:
        if close:
            fh.close()


def write_scores(dec: BasisDecomposition, years, dest) -> None:
    """CSV with columns year, score_1..score_K."""
    fh, close = (open(dest, "w", newline=""), True) if isinstance(dest, (str, PathLike)) else (dest, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", *(f"score_{k + 1}" for k in range(dec.K))])
        for y, row in zip(years, dec.scores):
            w.writerow([str(y), *(repr(float(v)) for v in row)])
    finally:
        if close:
            fh.close()
