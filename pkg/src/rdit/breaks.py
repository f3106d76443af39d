"""Structural breaks in a monthly series.

Breaks are located by global minimisation of the segmented sum of squared
residuals (dynamic programming over segment boundaries), the number of
breaks is chosen by sequential sup-F(l+1 | l) tests, and each break gets a
confidence interval from the asymptotic distribution of the break-date
estimator.

Positions inside the series are observation positions; a series built from
strike months only can skip calendar months, so everything reported to the
caller is translated back to month indices. A break index names the first
month of the new regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import ConfigError, ThinSampleError
from .months import format_month

Model = Literal["mean_shift", "trend_shift"]

# 5% critical values of sup-F(l+1 | l) at trimming 0.15, on the Wald scale
# (the F statistic times the number of breaking regressors); entry l gives
# the test of l+1 against l breaks.
SEQUENTIAL_CRITICAL_05 = {
    1: (8.58, 10.13, 11.14, 11.83, 12.25),
    2: (11.47, 12.95, 14.03, 14.85, 15.29),
}
TABLE_TRIMMING = 0.15

_SIM_SEED = 19980101
_SIM_REPS = 10_000
_SIM_STEPS = 1_000
_ETA_GRID = np.round(np.arange(0.01, 0.50, 0.01), 2)


@dataclass(frozen=True)
class BreakEstimate:
    """Chosen segmentation and the tests that selected it.

    ``sup_f_stats`` and ``p_values`` hold one entry per sequential test that
    was run, ending with the first non-rejection (or the ``max_breaks``
    test). ``ci_methods`` says, per break, whether the interval is the
    asymptotic one or the bootstrap fallback.
    """

    break_indices: tuple[int, ...]
    sup_f_stats: tuple[float, ...]
    p_values: tuple[float, ...]
    ci_per_break: tuple[tuple[int, int], ...]
    ssr_path: float
    trimming: float
    model: str = "mean_shift"
    ci_methods: tuple[str, ...] = ()
    ssr_by_m: dict[int, float] = field(default_factory=dict)
    breaks_by_m: dict[int, tuple[int, ...]] = field(default_factory=dict)
    critical_values: tuple[float | None, ...] = ()
    min_segment: int = 0
    n_obs: int = 0
    alpha: float = 0.05

    @property
    def n_breaks(self) -> int:
        return len(self.break_indices)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "n_obs": self.n_obs,
            "trimming": self.trimming,
            "min_segment": self.min_segment,
            "alpha": self.alpha,
            "breaks": [
                {"month": format_month(b), "ci_low": format_month(lo), "ci_high": format_month(hi), "ci_method": meth}
                for b, (lo, hi), meth in zip(self.break_indices, self.ci_per_break, self.ci_methods)
            ],
            "sequential_tests": [
                {"h0_breaks": l, "sup_f": f, "p_value": p, "critical_value_05": c}
                for l, (f, p, c) in enumerate(zip(self.sup_f_stats, self.p_values, self.critical_values))
            ],
            "ssr": self.ssr_path,
            "ssr_by_m": {str(m): v for m, v in self.ssr_by_m.items()},
            "breaks_by_m": {str(m): [format_month(b) for b in bs] for m, bs in self.breaks_by_m.items()},
        }


# --------------------------------------------------------------------------
# asymptotic distributions
# --------------------------------------------------------------------------


def argmax_cdf(x: float) -> float:
    """CDF of the argmax of a two-sided Brownian motion with drift ``-|s|/2``.

    This is the limit law of the scaled break-date estimator when the
    regimes share one error variance and regressor second moment.
    """
    if x <= 0:
        return 0.5 if x == 0 else 1.0 - argmax_cdf(-x)
    r = math.sqrt(x)
    return (
        1.0
        + math.sqrt(x / (2 * math.pi)) * math.exp(-x / 8)
        - (x + 5) / 2 * stats.norm.cdf(-r / 2)
        + 1.5 * math.exp(x) * stats.norm.cdf(-1.5 * r)
    )


@lru_cache(maxsize=8)
def argmax_quantile(prob: float) -> float:
    """Quantile of :func:`argmax_cdf`; the 0.975 point is about 11.03."""
    if not 0.5 < prob < 1:
        raise ConfigError(f"quantile level must lie in (0.5, 1), got {prob}")
    return float(optimize.brentq(lambda x: argmax_cdf(x) - prob, 0.0, 500.0, xtol=1e-10))


@lru_cache(maxsize=8)
def _sup_wald_draws(q: int) -> np.ndarray:
    """Simulated sup-Wald draws, shape ``(reps, len(_ETA_GRID))``.

    Column ``j`` is the supremum of ``|B(s)|^2 / (s (1 - s))`` over
    ``s`` in ``[eta_j, 1 - eta_j]`` for a ``q``-dimensional Brownian bridge
    ``B`` on a grid of ``_SIM_STEPS`` points.
    """
    rng = np.random.default_rng([_SIM_SEED, q])
    m = _SIM_STEPS
    s = np.arange(1, m) / m
    # the symmetric windows [eta, 1 - eta] are nested, so a running max over
    # grid points ordered by distance from 1/2 gives every eta at once
    order = np.argsort(np.abs(s - 0.5), kind="stable")
    dist = np.abs(s - 0.5)[order]
    cut = np.searchsorted(dist, 0.5 - _ETA_GRID + 1e-12, side="right") - 1
    out = np.empty((_SIM_REPS, len(_ETA_GRID)))
    chunk = 1_000
    for start in range(0, _SIM_REPS, chunk):
        inc = rng.standard_normal((chunk, m, q)) / math.sqrt(m)
        w = np.cumsum(inc, axis=1)
        bridge = w[:, :-1, :] - s[None, :, None] * w[:, -1:, :]
        stat = np.sum(bridge**2, axis=2) / (s * (1 - s))
        run = np.maximum.accumulate(stat[:, order], axis=1)
        out[start : start + chunk] = run[:, cut]
    return out


def sup_wald_cdf(x: float, q: int, eta: float) -> float:
    """Asymptotic CDF of sup-Wald with ``q`` breaking regressors and trimming ``eta``."""
    if not 0 < eta < 0.5:
        raise ConfigError(f"trimming must lie in (0, 0.5), got {eta}")
    draws = _sup_wald_draws(q)
    j = int(np.argmin(np.abs(_ETA_GRID - eta)))
    return float(np.mean(draws[:, j] <= x))


def sequential_p_value(f_stat: float, q: int, n_segments: int, eta: float) -> float:
    """p-value of sup-F(l+1 | l) with ``n_segments = l + 1`` tested segments."""
    if math.isinf(f_stat):
        return 0.0
    g = sup_wald_cdf(q * f_stat, q, eta)
    return float(1.0 - g**n_segments)


def sequential_critical_value(q: int, n_breaks_null: int, trimming: float) -> float | None:
    """Tabulated 5% value of sup-F(l+1 | l) on the F scale, if available."""
    table = SEQUENTIAL_CRITICAL_05.get(q)
    if table is None or not math.isclose(trimming, TABLE_TRIMMING) or n_breaks_null >= len(table):
        return None
    return table[n_breaks_null] / q


# --------------------------------------------------------------------------
# segment costs and the dynamic programme
# --------------------------------------------------------------------------


def _design(months: np.ndarray, model: Model) -> np.ndarray:
    if model == "mean_shift":
        return np.ones((len(months), 1))
    if model == "trend_shift":
        t = months - months.mean()
        return np.column_stack([np.ones(len(months)), t])
    raise ConfigError(f"unknown break model {model!r}")


def _prefix_ssr(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``out[j - 1]``: OLS SSR of ``y[:j]`` on ``X[:j]``; ``inf`` below ``k`` rows."""
    k = X.shape[1]
    xx = np.cumsum(X[:, :, None] * X[:, None, :], axis=0)
    xy = np.cumsum(X * y[:, None], axis=0)
    yy = np.cumsum(y * y)
    out = np.full(len(y), np.inf)
    ok = np.arange(1, len(y) + 1) >= k
    if k == 1:
        ssr = yy[ok] - xy[ok, 0] ** 2 / xx[ok, 0, 0]
    else:
        beta = np.linalg.solve(xx[ok], xy[ok][:, :, None])[:, :, 0]
        ssr = yy[ok] - np.sum(beta * xy[ok], axis=1)
    out[ok] = np.maximum(ssr, 0.0)
    return out


def _ssr_matrix(X: np.ndarray, y: np.ndarray, min_len: int) -> np.ndarray:
    """``C[i, j]``: SSR of the segment ``y[i:j]``; ``inf`` where ``j - i < min_len``."""
    n = len(y)
    C = np.full((n + 1, n + 1), np.inf)
    for i in range(n - min_len + 1):
        pre = _prefix_ssr(X[i:], y[i:])
        C[i, i + min_len : n + 1] = pre[min_len - 1 :]
    return C


def _dp(C: np.ndarray, n: int, max_breaks: int, h: int) -> dict[int, tuple[float, tuple[int, ...]]]:
    """Minimum SSR and break positions for every ``m <= max_breaks``."""
    # best[m][j]: minimal SSR of y[:j] split into m + 1 segments
    best = [C[0].copy()]
    arg: list[np.ndarray] = [np.zeros(n + 1, dtype=int)]
    for m in range(1, max_breaks + 1):
        cur = np.full(n + 1, np.inf)
        where = np.zeros(n + 1, dtype=int)
        for j in range((m + 1) * h, n + 1):
            cands = np.arange(m * h, j - h + 1)
            vals = best[m - 1][cands] + C[cands, j]
            t = int(np.argmin(vals))
            cur[j], where[j] = vals[t], cands[t]
        best.append(cur)
        arg.append(where)
    out = {}
    for m in range(max_breaks + 1):
        pos, j = [], n
        for mm in range(m, 0, -1):
            j = int(arg[mm][j])
            pos.append(j)
        out[m] = (float(best[m][n]), tuple(sorted(pos)))
    return out


def min_segment_length(n: int, trimming: float, k: int = 1) -> int:
    return max(math.ceil(trimming * n - 1e-9), k + 1)


def _segments(n: int, breaks: Sequence[int]) -> list[tuple[int, int]]:
    edges = [0, *breaks, n]
    return list(zip(edges[:-1], edges[1:]))


def _best_split(C: np.ndarray, a: int, b: int, h: int) -> tuple[float, int] | None:
    """Lowest two-piece SSR of segment ``[a, b)`` and the split position."""
    cands = np.arange(a + h, b - h + 1)
    if len(cands) == 0:
        return None
    vals = C[a, cands] + C[cands, b]
    t = int(np.argmin(vals))
    return float(vals[t]), int(cands[t])


def _is_flat(y: np.ndarray, scale: float) -> bool:
    return bool(np.ptp(y) <= 1e-10 * max(1.0, scale))


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def _as_series(series) -> tuple[np.ndarray, np.ndarray]:
    pairs = list(series)
    if pairs and not isinstance(pairs[0], (tuple, list, np.ndarray)):
        raise ConfigError("series must be (month_index, value) pairs")
    months = np.array([int(p[0]) for p in pairs], dtype=int)
    values = np.array([float(p[1]) for p in pairs], dtype=float)
    if len(months) > 1 and np.any(np.diff(months) <= 0):
        raise ConfigError("series months must be strictly increasing")
    if not np.all(np.isfinite(values)):
        raise ConfigError("series values must be finite")
    return months, values


def detrend(months: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Residuals from a global OLS line in month index."""
    X = _design(months.astype(float), "trend_shift")
    beta, *_ = np.linalg.lstsq(X, values, rcond=None)
    return values - X @ beta


def estimate_breaks(
    series,
    max_breaks: int = 3,
    trimming: float = 0.15,
    model: Model = "mean_shift",
    alpha: float = 0.05,
    *,
    detrend_first: bool = False,
    ci_level: float = 0.95,
    bootstrap_reps: int = 999,
    seed: int = 0,
) -> BreakEstimate:
    """Estimate structural breaks in a monthly series.

    Parameters
    ----------
    series : iterable of (month_index, value)
        Strictly increasing months. Gaps are allowed; positions are used.
    max_breaks : int
        Largest number of breaks considered, at most 5.
    trimming : float
        Every segment holds at least ``ceil(trimming * n)`` observations.
    model : {"mean_shift", "trend_shift"}
        Piecewise-constant mean, or piecewise-linear trend in month index.
    alpha : float
        Level of each sequential test.
    detrend_first : bool
        Remove a global linear trend before searching.

    Returns
    -------
    BreakEstimate
        A constant series returns no breaks and a single test with p = 1.

    Raises
    ------
    ThinSampleError
        Fewer than ``(max_breaks + 1)`` minimum-length segments fit.
    """
    if not 1 <= max_breaks <= 5:
        raise ConfigError(f"max_breaks must lie in 1..5, got {max_breaks}")
    if not 0 < trimming < 0.5:
        raise ConfigError(f"trimming must lie in (0, 0.5), got {trimming}")
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    months, raw = _as_series(series)
    n = len(months)
    X = _design(months.astype(float), model)
    k = X.shape[1]
    h = min_segment_length(n, trimming, k)
    if n < (max_breaks + 1) * h:
        raise ThinSampleError(
            f"{n} observations cannot hold {max_breaks + 1} segments of at least {h} (trimming {trimming})"
        )
    y = detrend(months, raw) if detrend_first else raw
    scale = float(np.max(np.abs(raw))) if n else 1.0

    if _is_flat(y, scale):
        ssr = float(np.sum((y - y.mean()) ** 2))
        return BreakEstimate(
            break_indices=(),
            sup_f_stats=(0.0,),
            p_values=(1.0,),
            ci_per_break=(),
            ssr_path=ssr,
            trimming=trimming,
            model=model,
            critical_values=(sequential_critical_value(k, 0, trimming),),
            ssr_by_m={0: ssr},
            breaks_by_m={0: ()},
            min_segment=h,
            n_obs=n,
            alpha=alpha,
        )

    yc = y - y.mean()
    C = _ssr_matrix(X, yc, h)
    paths = _dp(C, n, max_breaks, h)
    tol = 1e3 * n * (np.finfo(float).eps * max(1.0, scale)) ** 2

    stats_, pvals, crits = [], [], []
    chosen = 0
    for l in range(max_breaks):
        ssr_null, brk = paths[l]
        best_alt = math.inf
        for a, b in _segments(n, brk):
            split = _best_split(C, a, b, h)
            if split is not None:
                best_alt = min(best_alt, ssr_null - C[a, b] + split[0])
        crit = sequential_critical_value(k, l, trimming)
        if math.isinf(best_alt):
            f_stat, p = 0.0, 1.0
        elif ssr_null <= tol:
            f_stat, p = 0.0, 1.0
        elif best_alt <= tol:
            f_stat, p = math.inf, 0.0
        else:
            dof = n - (l + 2) * k
            f_stat = ((ssr_null - best_alt) / k) / (best_alt / dof)
            p = sequential_p_value(f_stat, k, l + 1, trimming)
        stats_.append(float(f_stat))
        pvals.append(float(p))
        crits.append(crit)
        reject = f_stat > crit if (crit is not None and math.isclose(alpha, 0.05)) else p < alpha
        if not reject:
            break
        chosen = l + 1

    ssr_final, brk_final = paths[chosen]
    cis, methods = [], []
    for i, pos in enumerate(brk_final):
        lo, hi, meth = _break_ci(X, yc, brk_final, i, h, ssr_final, ci_level, bootstrap_reps, seed, tol)
        cis.append((int(months[lo]), int(months[hi])))
        methods.append(meth)

    return BreakEstimate(
        break_indices=tuple(int(months[p]) for p in brk_final),
        sup_f_stats=tuple(stats_),
        p_values=tuple(pvals),
        ci_per_break=tuple(cis),
        ssr_path=ssr_final,
        trimming=trimming,
        model=model,
        ci_methods=tuple(methods),
        ssr_by_m={m: v[0] for m, v in paths.items()},
        breaks_by_m={m: tuple(int(months[p]) for p in v[1]) for m, v in paths.items()},
        critical_values=tuple(crits),
        min_segment=h,
        n_obs=n,
        alpha=alpha,
    )


def _fit_segments(X: np.ndarray, y: np.ndarray, breaks: Sequence[int]) -> tuple[list[np.ndarray], np.ndarray]:
    coefs, fitted = [], np.empty_like(y)
    for a, b in _segments(len(y), breaks):
        beta, *_ = np.linalg.lstsq(X[a:b], y[a:b], rcond=None)
        coefs.append(beta)
        fitted[a:b] = X[a:b] @ beta
    return coefs, fitted


def _break_ci(
    X: np.ndarray,
    y: np.ndarray,
    breaks: tuple[int, ...],
    i: int,
    h: int,
    ssr: float,
    level: float,
    reps: int,
    seed: int,
    tol: float,
) -> tuple[int, int, str]:
    n, k = X.shape
    coefs, fitted = _fit_segments(X, y, breaks)
    segs = _segments(n, breaks)
    sigma2 = ssr / max(n - len(segs) * k, 1)
    seg_var = [float(np.sum((y[a:b] - fitted[a:b]) ** 2)) for a, b in segs]
    pos = breaks[i]
    a, b = segs[i][0], segs[i + 1][1]
    delta = coefs[i + 1] - coefs[i]
    Q = X[a:b].T @ X[a:b] / (b - a)
    signal = float(delta @ Q @ delta)

    if sigma2 > tol and signal > 0 and all(v > tol for v in seg_var):
        c = argmax_quantile(0.5 + level / 2)
        w = int(math.floor(c * sigma2 / signal)) + 1
        return max(pos - w, 0), min(pos + w, n - 1), "asymptotic"

    # degenerate variances: moving-block bootstrap of the fitted residuals
    resid = y - fitted
    block = max(1, math.ceil(n ** (1 / 3)))
    starts_max = n - block + 1
    draws = np.empty(reps, dtype=int)
    for r in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        starts = rng.integers(0, starts_max, size=math.ceil(n / block))
        e = np.concatenate([resid[s : s + block] for s in starts])[:n]
        yb = fitted + e
        draws[r] = _local_costs(X, yb, a, b, h)
    lo = int(np.quantile(draws, (1 - level) / 2, method="lower"))
    hi = int(np.quantile(draws, (1 + level) / 2, method="higher"))
    return lo, hi, "bootstrap"


def _local_costs(X: np.ndarray, y: np.ndarray, a: int, b: int, h: int) -> int:
    """Best single split of ``y[a:b]`` (absolute position)."""
    left = _prefix_ssr(X[a:b], y[a:b])
    right = _prefix_ssr(X[a:b][::-1], y[a:b][::-1])
    length = b - a
    t = np.arange(h, length - h + 1)
    total = left[t - 1] + right[length - t - 1]
    return a + int(t[np.argmin(total)])


def chow_f_test(series, candidate: int, model: Model = "mean_shift") -> dict[str, float]:
    """Chow test for a break at month ``candidate``.

    The second segment starts at the first observation dated at or after
    ``candidate``. Returns ``{"f_stat", "p_value", "df_num", "df_den"}``
    with ``F(k, n - 2k)`` degrees of freedom.
    """
    months, y = _as_series(series)
    X = _design(months.astype(float), model)
    n, k = X.shape
    split = int(np.searchsorted(months, candidate, side="left"))
    if split < k + 1 or n - split < k + 1:
        raise ThinSampleError(
            f"candidate {format_month(candidate)} leaves segments of {split} and {n - split}; need {k + 1} each"
        )

    def ssr(Xs: np.ndarray, ys: np.ndarray) -> float:
        beta, *_ = np.linalg.lstsq(Xs, ys, rcond=None)
        r = ys - Xs @ beta
        return float(r @ r)

    pooled = ssr(X, y)
    split_ssr = ssr(X[:split], y[:split]) + ssr(X[split:], y[split:])
    df_den = n - 2 * k
    scale = float(np.max(np.abs(y))) if n else 1.0
    tol = 1e3 * n * (np.finfo(float).eps * max(1.0, scale)) ** 2
    if split_ssr <= tol:
        if pooled <= tol:
            f_stat, p = 0.0, 1.0
        else:
            f_stat, p = math.inf, 0.0
    else:
        f_stat = max(pooled - split_ssr, 0.0) / k / (split_ssr / df_den)
        p = float(stats.f.sf(f_stat, k, df_den))
    return {"f_stat": float(f_stat), "p_value": float(p), "df_num": k, "df_den": df_den}
