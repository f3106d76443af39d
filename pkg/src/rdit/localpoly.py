"""Kernel-weighted least squares and local polynomial fits.

This is the numerical core shared by the RD estimator, the bandwidth
selector and the robustness checks. Fits are solved through a column-pivoted
QR factorisation of ``sqrt(W) X``; event-time polynomials at wide bandwidths
make the normal equations badly conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg

from .errors import ConfigError, EmptyWindowError, SingularDesignError, ThinWindowError

KernelKind = Literal["triangular", "uniform", "epanechnikov"]
Variance = Literal["hc0", "nn"]
Side = Literal["left", "right", "both_with_interaction"]

# Rule-of-thumb pilot constants used by the MSE bandwidth selector.
_PILOT_CONSTANT = {"triangular": 2.576, "uniform": 1.843, "epanechnikov": 2.34}


@dataclass(frozen=True)
class Kernel:
    kind: KernelKind = "triangular"

    def __post_init__(self) -> None:
        if self.kind not in _PILOT_CONSTANT:
            raise ConfigError(f"unknown kernel {self.kind!r}")

    def weight(self, u: np.ndarray | float) -> np.ndarray:
        """Kernel density at ``u``.

        Points at ``|u| == 1`` get zero weight from the triangular and
        Epanechnikov kernels and full weight from the uniform kernel.
        """
        u = np.abs(np.asarray(u, dtype=float))
        if self.kind == "triangular":
            return np.where(u < 1.0, 1.0 - u, 0.0)
        if self.kind == "uniform":
            return np.where(u <= 1.0, 0.5, 0.0)
        return np.where(u < 1.0, 0.75 * (1.0 - u * u), 0.0)

    @property
    def pilot_constant(self) -> float:
        return _PILOT_CONSTANT[self.kind]

    @property
    def label(self) -> str:
        return self.kind.capitalize()


def as_kernel(kernel: Kernel | str) -> Kernel:
    if isinstance(kernel, Kernel):
        return kernel
    aliases = {"tri": "triangular", "uni": "uniform", "epa": "epanechnikov"}
    return Kernel(aliases.get(kernel, kernel))  # type: ignore[arg-type]


@dataclass(frozen=True)
class WlsFit:
    """Weighted least-squares solution.

    ``residuals`` covers every input row, including rows with zero weight.
    ``inv_gram`` is ``(X'WX)^-1``; the bias-corrected RD estimator needs it
    directly. ``covariance`` is the sandwich ``inv_gram @ meat @ inv_gram``
    built from the requested residual estimator.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    covariance: np.ndarray
    inv_gram: np.ndarray
    dof: int
    sse: float
    n_used: int
    names: tuple[str, ...] = ()
    n_left: int = 0
    n_right: int = 0

    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


def nn_residuals(x: np.ndarray, y: np.ndarray, nnmatch: int = 3) -> np.ndarray:
    """Nearest-neighbour residuals for heteroskedasticity-robust variance.

    Each observation is compared with the mean of at least ``nnmatch``
    neighbours in ``x`` (ties in distance pull in both sides, duplicated
    ``x`` values are kept together) and the difference is scaled by
    ``sqrt(J / (J + 1))``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 2:
        raise ThinWindowError(f"nearest-neighbour variance needs at least 2 observations, got {n}")
    order = np.argsort(x, kind="mergesort")
    xs, ys = x[order], y[order]

    # dups[i]: size of the tie block holding i; dupsid[i]: 1-based rank inside it
    dups = np.empty(n, dtype=int)
    dupsid = np.empty(n, dtype=int)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        dups[i : j + 1] = j - i + 1
        dupsid[i : j + 1] = np.arange(1, j - i + 2)
        i = j + 1

    target = min(nnmatch, n - 1)
    res = np.empty(n)
    csum = np.concatenate([[0.0], np.cumsum(ys)])
    for pos in range(n):
        rpos = dups[pos] - dupsid[pos]
        lpos = dupsid[pos] - 1
        while lpos + rpos < target:
            left, right = pos - lpos - 1, pos + rpos + 1
            if left < 0:
                rpos += dups[right]
            elif right >= n:
                lpos += dups[left]
            else:
                dl = xs[pos] - xs[left]
                dr = xs[right] - xs[pos]
                if dl > dr:
                    rpos += dups[right]
                elif dl < dr:
                    lpos += dups[left]
                else:
                    rpos += dups[right]
                    lpos += dups[left]
        lo, hi = max(0, pos - lpos), min(n - 1, pos + rpos)
        jn = hi - lo
        y_j = csum[hi + 1] - csum[lo] - ys[pos]
        res[pos] = np.sqrt(jn / (jn + 1.0)) * (ys[pos] - y_j / jn)

    out = np.empty(n)
    out[order] = res
    return out


def _check_rank(r: np.ndarray, piv: np.ndarray, ncol: int) -> None:
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        raise SingularDesignError(list(range(ncol)))
    tol = diag[0] * max(r.shape) * np.finfo(float).eps * 1e3
    rank = int(np.sum(diag > tol))
    if rank < ncol:
        raise SingularDesignError(sorted(int(c) for c in piv[rank:]))


def weighted_least_squares(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    variance: Variance = "hc0",
    *,
    running: np.ndarray | None = None,
    groups: np.ndarray | None = None,
    nnmatch: int = 3,
) -> WlsFit:
    """Minimise ``sum(w * (y - X @ beta)**2)``.

    Parameters
    ----------
    X : (n, k) array
    y : (n,) array
    w : (n,) array of nonnegative weights
    variance : {"hc0", "nn"}
        ``hc0`` uses the fitted residuals in the sandwich; ``nn`` uses
        nearest-neighbour residuals along ``running`` (required), computed
        separately within each level of ``groups`` when given.

    Raises
    ------
    EmptyWindowError
        No row has positive weight.
    SingularDesignError
        The weighted design has deficient column rank; ``.columns`` lists the
        columns the pivoted QR could not place.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n, k = X.shape
    if len(y) != n or len(w) != n:
        raise ConfigError(f"shape mismatch: X has {n} rows, y {len(y)}, w {len(w)}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ConfigError("weights must be finite and nonnegative")
    if variance not in ("hc0", "nn"):
        raise ConfigError(f"unknown variance estimator {variance!r}")

    used = w > 0
    n_used = int(used.sum())
    if n_used == 0:
        raise EmptyWindowError("all weights are zero")
    Xu, yu, wu = X[used], y[used], w[used]
    sw = np.sqrt(wu)

    q, r, piv = scipy.linalg.qr(sw[:, None] * Xu, mode="economic", pivoting=True)
    _check_rank(r, piv, k)
    beta_piv = scipy.linalg.solve_triangular(r, q.T @ (sw * yu))
    beta = np.empty(k)
    beta[piv] = beta_piv
    r_inv = scipy.linalg.solve_triangular(r, np.eye(k))
    inv_gram_piv = r_inv @ r_inv.T
    inv_gram = np.empty((k, k))
    inv_gram[np.ix_(piv, piv)] = inv_gram_piv

    resid = y - X @ beta
    ru = resid[used]
    sse = float(np.sum(wu * ru * ru))

    if variance == "hc0":
        e = ru
    else:
        if running is None:
            raise ConfigError("nearest-neighbour variance needs the running variable")
        xr = np.asarray(running, dtype=float)[used]
        if groups is None:
            e = nn_residuals(xr, yu, nnmatch)
        else:
            g = np.asarray(groups)[used]
            e = np.empty(n_used)
            for level in np.unique(g):
                m = g == level
                e[m] = nn_residuals(xr[m], yu[m], nnmatch)
    score = (wu * e)[:, None] * Xu
    cov = inv_gram @ (score.T @ score) @ inv_gram
    cov = (cov + cov.T) / 2

    return WlsFit(
        coefficients=beta,
        residuals=resid,
        covariance=cov,
        inv_gram=inv_gram,
        dof=n_used - k,
        sse=sse,
        n_used=n_used,
    )


def polynomial_basis(dx: np.ndarray, p: int) -> np.ndarray:
    """Columns ``1, dx, dx**2, ..., dx**p``."""
    return np.vander(np.asarray(dx, dtype=float), p + 1, increasing=True)


def local_polynomial_fit(
    x: np.ndarray,
    y: np.ndarray,
    center: float,
    h: float,
    p: int = 1,
    kernel: Kernel | str = "triangular",
    side: Side = "both_with_interaction",
    variance: Variance = "nn",
    nnmatch: int = 3,
) -> WlsFit:
    """Kernel-weighted polynomial fit in ``x - center``.

    ``side="left"`` uses ``x < center``, ``"right"`` uses ``x >= center``.
    ``"both_with_interaction"`` fits both sides at once with a treatment
    indicator ``D = 1[x >= center]`` and its interactions with every
    polynomial term; the coefficient named ``"D"`` is the jump at the
    center.
    """
    if h <= 0:
        raise ConfigError(f"bandwidth must be positive, got {h}")
    if p < 0:
        raise ConfigError(f"polynomial order must be nonnegative, got {p}")
    kern = as_kernel(kernel)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - center
    w = kern.weight(dx / h)
    right = dx >= 0
    n_left = int(np.sum((w > 0) & ~right))
    n_right = int(np.sum((w > 0) & right))
    need = p + 2

    if side == "left":
        w = np.where(right, 0.0, w)
        if n_left < need:
            raise ThinWindowError(f"left side has {n_left} in-window observations, need {need}", n_left, n_right)
        X = polynomial_basis(dx, p)
        names = tuple(_term_names(p))
        n_right = 0
    elif side == "right":
        w = np.where(right, w, 0.0)
        if n_right < need:
            raise ThinWindowError(f"right side has {n_right} in-window observations, need {need}", n_left, n_right)
        X = polynomial_basis(dx, p)
        names = tuple(_term_names(p))
        n_left = 0
    elif side == "both_with_interaction":
        if n_left < need or n_right < need:
            raise ThinWindowError(
                f"in-window observations left={n_left}, right={n_right}; need {need} per side", n_left, n_right
            )
        base = polynomial_basis(dx, p)
        d = right.astype(float)
        X = np.column_stack([base, d[:, None] * base])
        names = tuple(_term_names(p)) + tuple("D" if t == "1" else f"D*{t}" for t in _term_names(p))
    else:
        raise ConfigError(f"unknown side {side!r}")

    fit = weighted_least_squares(
        X, y, w, variance, running=x, groups=right if side == "both_with_interaction" else None, nnmatch=nnmatch
    )
    return WlsFit(
        coefficients=fit.coefficients,
        residuals=fit.residuals,
        covariance=fit.covariance,
        inv_gram=fit.inv_gram,
        dof=fit.dof,
        sse=fit.sse,
        n_used=fit.n_used,
        names=names,
        n_left=n_left,
        n_right=n_right,
    )


def _term_names(p: int) -> list[str]:
    return ["1"] + ["dx" if j == 1 else f"dx^{j}" for j in range(1, p + 1)]
