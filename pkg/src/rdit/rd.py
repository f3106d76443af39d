"""Sharp regression discontinuity in time.

The estimator follows the usual local-polynomial recipe: an order-``p``
fit on each side of the cutoff gives the conventional jump, an order-``q``
fit at a pilot bandwidth estimates the leading bias term, and the robust
variance accounts for the noise in that bias estimate.

Two layers are exposed. ``rd_bandwidth`` and ``rd_estimate`` work on plain
arrays (running variable in months relative to the cutoff); the
``select_bandwidth_mserd`` / ``estimate_rd`` pair take a
:class:`~rdit.strikes.MonthlyPanel` and an :class:`RdConfig`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, MissingOutcomeError, ThinWindowError, ZeroVarianceError
from .localpoly import Kernel, as_kernel, nn_residuals, polynomial_basis, weighted_least_squares
from .months import format_month, parse_month
from .strikes import MonthlyPanel


@dataclass(frozen=True)
class RdConfig:
    """Estimator settings.

    ``bandwidth`` is ``"mserd"`` or a number of months; a manual bandwidth
    is also used as the bias bandwidth unless ``bias_bandwidth`` is set.
    ``series`` supplies a custom outcome keyed by ``YYYY-MM`` (used when
    ``outcome == "custom"``).
    """

    cutoff: str = "2011-07"
    outcome: str = "civilian_casualties"
    p: int = 1
    q: int = 2
    kernel: str = "triangular"
    bandwidth: str | float = "mserd"
    bias_bandwidth: float | None = None
    nnmatch: int = 3
    series: Mapping[str, float] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.p < 0:
            raise ConfigError(f"p must be nonnegative, got {self.p}")
        if self.q <= self.p:
            raise ConfigError(f"bias order q={self.q} must exceed p={self.p}")
        as_kernel(self.kernel)
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "mserd":
                raise ConfigError(f"bandwidth must be 'mserd' or a number of months, got {self.bandwidth!r}")
        elif self.bandwidth < self.p + 2:
            raise ConfigError(f"manual bandwidth {self.bandwidth} is below p + 2 = {self.p + 2} months")
        if self.bias_bandwidth is not None and self.bias_bandwidth <= 0:
            raise ConfigError("bias bandwidth must be positive")
        parse_month(self.cutoff)

    @property
    def bandwidth_type(self) -> str:
        return "mserd" if self.bandwidth == "mserd" else "Manual"

    def with_(self, **changes) -> "RdConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class RdEstimate:
    tau_conventional: float
    tau_bias_corrected: float
    tau_robust: float
    se_conventional: float
    se_bias_corrected: float
    se_robust: float
    p_conventional: float
    p_bias_corrected: float
    p_robust: float
    bandwidth: float
    bias_bandwidth: float
    n_left: int
    n_right: int
    p: int = 1
    q: int = 2
    kernel: str = "triangular"
    bandwidth_type: str = "Manual"
    cutoff: str | None = None
    outcome: str | None = None
    warnings: tuple[str, ...] = ()
    donut: str | None = None

    @property
    def z_conventional(self) -> float:
        return _ratio(self.tau_conventional, self.se_conventional)

    @property
    def z_robust(self) -> float:
        return _ratio(self.tau_robust, self.se_robust)

    def significant(self, alpha: float = 0.05, which: str = "conventional") -> bool:
        return getattr(self, f"p_{which}") < alpha

    def ci(self, which: str = "robust", level: float = 0.95) -> tuple[float, float]:
        z = stats.norm.ppf(0.5 + level / 2)
        tau, se = getattr(self, f"tau_{which}"), getattr(self, f"se_{which}")
        return tau - z * se, tau + z * se

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["warnings"] = list(self.warnings)
        return out


def _ratio(tau: float, se: float) -> float:
    if se > 0:
        return tau / se
    return 0.0 if abs(tau) < 1e-12 else math.copysign(math.inf, tau)


def _p_value(tau: float, se: float) -> float:
    """Two-sided normal p-value; a zero standard error gives 0 or 1."""
    z = _ratio(tau, se)
    if math.isinf(z):
        return 0.0
    return float(2.0 * stats.norm.sf(abs(z)))


# --------------------------------------------------------------------------
# bandwidth selection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _BwTerms:
    V: float
    B: float
    R: float


def _bw_terms(
    x: np.ndarray,
    y: np.ndarray,
    o: int,
    nu: int,
    o_b: int,
    h_v: float,
    h_b: float,
    scale: float,
    kern: Kernel,
    nnmatch: int,
) -> _BwTerms:
    """Variance and bias constants for one side (cutoff at zero).

    The variance of the ``nu``-th derivative comes from an order-``o`` fit
    at ``h_v``; the bias leading term uses the ``(o+1)``-th coefficient of
    an order-``o_b`` fit at ``h_b``.
    """
    w = kern.weight(x / h_v)
    m = w > 0
    if m.sum() < o + 2:
        raise ThinWindowError(f"pilot window of {h_v:.2f} months holds {int(m.sum())} points, need {o + 2}")
    xv, yv, wv = x[m], y[m], w[m]
    Rv = polynomial_basis(xv, o)
    fit_v = weighted_least_squares(Rv, yv, wv, "nn", running=xv, nnmatch=nnmatch)
    v_v = fit_v.covariance[nu, nu]
    vvec = Rv.T @ (wv * (xv / h_v) ** (o + 1))
    b_const = h_v**nu * (fit_v.inv_gram @ vvec)[nu]

    wb = kern.weight(x / h_b)
    mb = wb > 0
    if mb.sum() < o_b + 2:
        raise ThinWindowError(f"bias window of {h_b:.2f} months holds {int(mb.sum())} points, need {o_b + 2}")
    xb, yb = x[mb], y[mb]
    fit_b = weighted_least_squares(polynomial_basis(xb, o_b), yb, wb[mb], "nn", running=xb, nnmatch=nnmatch)

    bw_reg = 0.0
    if scale > 0:
        bw_reg = 3.0 * b_const**2 * fit_b.covariance[o + 1, o + 1]
    B = math.sqrt(2.0 * (o + 1 - nu)) * b_const * fit_b.coefficients[o + 1]
    V = (2 * nu + 1) * h_v ** (2 * nu + 1) * v_v
    R = scale * 2.0 * (o + 1 - nu) * bw_reg
    return _BwTerms(V=float(V), B=float(B), R=float(R))


def _solve_bw(left: _BwTerms, right: _BwTerms, rate: float, scale: float) -> float:
    den = (right.B - left.B) ** 2 + scale * (right.R + left.R)
    num = left.V + right.V
    # no estimated bias or no estimated noise: the data cannot trade them off
    if not (den > 0 and num > 0):
        return math.inf
    return float((num / den) ** rate)


def _min_window(dist: np.ndarray, need: int, kern: Kernel) -> float:
    """Smallest bandwidth giving ``need`` points positive weight on a side."""
    d = np.sort(dist)
    if len(d) < need:
        return math.inf
    if kern.kind == "uniform":
        return float(d[need - 1])
    if len(d) > need and d[need] > d[need - 1]:
        return float((d[need - 1] + d[need]) / 2)
    return float(d[need - 1]) * 1.1 + 1e-9


# Pilot windows are widened until they hold this many distinct running values per side.
_MIN_UNIQUE = 10


def rd_bandwidth(
    x: np.ndarray,
    y: np.ndarray,
    p: int = 1,
    q: int = 2,
    kernel: Kernel | str = "triangular",
    nnmatch: int = 3,
    scaleregul: float = 1.0,
) -> tuple[float, float]:
    """MSE-optimal common bandwidth ``h`` and bias bandwidth ``b``.

    ``x`` is the running variable centred at the cutoff (treated when
    ``x >= 0``). Three plug-in steps are chained: a rule-of-thumb pilot
    ``c``, a bandwidth ``d`` for the order-``q+1`` derivative, then ``b``
    and ``h``. The pilot and ``d`` are widened to cover at least ten
    distinct running values per side. Both results are capped at the data
    range, ``b`` always covers ``q + 2`` points per side, and ``b`` is
    never smaller than ``h``.
    """
    kern = as_kernel(kernel)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    left, right = x < 0, x >= 0
    need = q + 3
    if left.sum() < need or right.sum() < need:
        raise ThinWindowError(
            f"bandwidth selection needs {need} observations per side, have "
            f"left={int(left.sum())}, right={int(right.sum())}",
            int(left.sum()),
            int(right.sum()),
        )
    if np.ptp(y) == 0:
        raise ZeroVarianceError("outcome is constant; the MSE-optimal bandwidth is undefined")

    xl, yl, xr, yr = x[left], y[left], x[right], y[right]
    uniq_l = np.sort(np.unique(-xl))
    uniq_r = np.sort(np.unique(xr))
    n_unique = len(uniq_l) + len(uniq_r)

    x_sd = float(np.std(x, ddof=1))
    x_iq = float(np.subtract(*np.quantile(x, [0.75, 0.25], method="averaged_inverted_cdf")))
    spread = min(x_sd, x_iq / 1.349)
    c_bw = kern.pilot_constant * spread * n_unique ** (-0.2)
    max_l, max_r = float(uniq_l[-1]), float(uniq_r[-1])
    bw_max = max(max_l, max_r)
    c_bw = min(c_bw, bw_max)
    pad = 1 + math.sqrt(np.finfo(float).eps)
    bw_min = max(
        uniq_l[min(_MIN_UNIQUE, len(uniq_l)) - 1] * pad,
        uniq_r[min(_MIN_UNIQUE, len(uniq_r)) - 1] * pad,
    )
    c_bw = max(c_bw, bw_min)

    dl = _bw_terms(xl, yl, q + 1, q + 1, q + 2, c_bw, max_l * pad, 0.0, kern, nnmatch)
    dr = _bw_terms(xr, yr, q + 1, q + 1, q + 2, c_bw, max_r * pad, 0.0, kern, nnmatch)
    d_bw = max(min(_solve_bw(dl, dr, 1.0 / (2 * q + 5), 0.0), bw_max), bw_min)

    bl = _bw_terms(xl, yl, q, p + 1, q + 1, c_bw, d_bw, scaleregul, kern, nnmatch)
    br = _bw_terms(xr, yr, q, p + 1, q + 1, c_bw, d_bw, scaleregul, kern, nnmatch)
    b_bw = min(_solve_bw(bl, br, 1.0 / (2 * q + 3), scaleregul), bw_max)
    # a gap at the cutoff (donut) can leave the b window empty on a side
    b_bw = max(b_bw, _min_window(-xl, q + 2, kern), _min_window(xr, q + 2, kern))

    hl = _bw_terms(xl, yl, p, 0, q, c_bw, b_bw, scaleregul, kern, nnmatch)
    hr = _bw_terms(xr, yr, p, 0, q, c_bw, b_bw, scaleregul, kern, nnmatch)
    h_bw = min(_solve_bw(hl, hr, 1.0 / (2 * p + 3), scaleregul), bw_max)

    return h_bw, max(b_bw, h_bw)


# --------------------------------------------------------------------------
# estimation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _SideFit:
    beta_p: np.ndarray
    beta_bc: np.ndarray
    v_cl: float
    v_rb: float
    n_eff: int


def _side_fit(x: np.ndarray, y: np.ndarray, p: int, q: int, h: float, b: float, kern: Kernel, nnmatch: int) -> _SideFit:
    w_h = kern.weight(x / h)
    w_b = kern.weight(x / b)
    ind = (w_h > 0) | (w_b > 0)
    ex, ey, wh, wb = x[ind], y[ind], w_h[ind], w_b[ind]
    Rq = polynomial_basis(ex, q)
    Rp = Rq[:, : p + 1]

    fit_p = weighted_least_squares(Rp, ey, wh, "hc0")
    fit_q = weighted_least_squares(Rq, ey, wb, "hc0")
    inv_gp, inv_gq = fit_p.inv_gram, fit_q.inv_gram

    u = ex / h
    L = Rp.T @ (wh * u ** (p + 1))
    # rows of inv_gq @ (Rq * wb)' give each q-fit coefficient as a linear map of y
    q_row = (inv_gq @ (Rq * wb[:, None]).T)[p + 1]
    Qq = (Rp * wh[:, None]) - h ** (p + 1) * np.outer(q_row, L)

    beta_p = fit_p.coefficients
    beta_bc = inv_gp @ (Qq.T @ ey)

    res = nn_residuals(ex, ey, nnmatch)
    s_cl = (Rp * wh[:, None]) * res[:, None]
    s_rb = Qq * res[:, None]
    v_cl = (inv_gp @ (s_cl.T @ s_cl) @ inv_gp)[0, 0]
    v_rb = (inv_gp @ (s_rb.T @ s_rb) @ inv_gp)[0, 0]
    return _SideFit(beta_p, beta_bc, float(v_cl), float(v_rb), int(np.sum(wh > 0)))


def rd_estimate(
    x: np.ndarray,
    y: np.ndarray,
    h: float,
    b: float | None = None,
    p: int = 1,
    q: int = 2,
    kernel: Kernel | str = "triangular",
    nnmatch: int = 3,
) -> RdEstimate:
    """Jump in the conditional mean of ``y`` at ``x == 0``.

    Returns the conventional estimate with its nearest-neighbour standard
    error, the bias-corrected estimate (same standard error) and the robust
    variant (bias-corrected point, variance including the bias-estimation
    noise). Each side needs ``p + 2`` points inside ``h`` and ``q + 2``
    inside ``b``.
    """
    kern = as_kernel(kernel)
    if q <= p:
        raise ConfigError(f"bias order q={q} must exceed p={p}")
    b = h if b is None else b
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ConfigError("x and y differ in length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise MissingOutcomeError("running variable and outcome must be finite")
    # the estimator is translation invariant; anchoring at y[0] makes a
    # constant outcome give exact zeros instead of rounding noise
    if len(y):
        y = y - y[0]
    left, right = x < 0, x >= 0

    for name, bw, need in (("h", h, p + 2), ("b", b, q + 2)):
        nl = int(np.sum(left & (kern.weight(x / bw) > 0)))
        nr = int(np.sum(right & (kern.weight(x / bw) > 0)))
        if nl < need or nr < need:
            raise ThinWindowError(
                f"bandwidth {name}={bw:.3f} leaves left={nl}, right={nr} in-window observations; need {need} per side",
                nl,
                nr,
            )

    fl = _side_fit(x[left], y[left], p, q, h, b, kern, nnmatch)
    fr = _side_fit(x[right], y[right], p, q, h, b, kern, nnmatch)

    tau_cl = float(fr.beta_p[0] - fl.beta_p[0])
    tau_bc = float(fr.beta_bc[0] - fl.beta_bc[0])
    se_cl = math.sqrt(max(fl.v_cl + fr.v_cl, 0.0))
    se_rb = math.sqrt(max(fl.v_rb + fr.v_rb, 0.0))
    return RdEstimate(
        tau_conventional=tau_cl,
        tau_bias_corrected=tau_bc,
        tau_robust=tau_bc,
        se_conventional=se_cl,
        se_bias_corrected=se_cl,
        se_robust=se_rb,
        p_conventional=_p_value(tau_cl, se_cl),
        p_bias_corrected=_p_value(tau_bc, se_cl),
        p_robust=_p_value(tau_bc, se_rb),
        bandwidth=float(h),
        bias_bandwidth=float(b),
        n_left=fl.n_eff,
        n_right=fr.n_eff,
        p=p,
        q=q,
        kernel=kern.kind,
    )


# --------------------------------------------------------------------------
# panel-level API
# --------------------------------------------------------------------------


def outcome_series(panel: MonthlyPanel, config: RdConfig) -> tuple[np.ndarray, np.ndarray]:
    """Event time and outcome for the months where the outcome is defined."""
    x = panel.event_time
    if config.outcome == "custom":
        if config.series is None:
            raise ConfigError("outcome 'custom' needs a series")
        y = custom_outcome(panel, config.series)
    else:
        y = panel.outcome(config.outcome)
    keep = np.isfinite(y)
    if not keep.any():
        raise MissingOutcomeError(f"outcome {config.outcome!r} is undefined in every panel month")
    return x[keep], y[keep]


def custom_outcome(panel: MonthlyPanel, series: Mapping[str, float]) -> np.ndarray:
    """Align a ``YYYY-MM``-keyed series to the panel months."""
    from .errors import JoinError

    keyed = {parse_month(k): float(v) for k, v in series.items()}
    missing = [format_month(m) for m in panel.month_indices if int(m) not in keyed]
    if missing:
        raise JoinError(missing)
    return np.array([keyed[int(m)] for m in panel.month_indices], dtype=float)


def _check_cutoff(panel: MonthlyPanel, config: RdConfig) -> None:
    if parse_month(config.cutoff) != panel.cutoff_index:
        raise ConfigError(
            f"config cutoff {config.cutoff} does not match panel cutoff {format_month(panel.cutoff_index)}"
        )


def select_bandwidth_mserd(panel: MonthlyPanel, config: RdConfig) -> dict[str, float]:
    """``{"h": ..., "b": ...}`` in months; a manual bandwidth passes through."""
    _check_cutoff(panel, config)
    if config.bandwidth != "mserd":
        h = float(config.bandwidth)
        return {"h": h, "b": float(config.bias_bandwidth or h)}
    x, y = outcome_series(panel, config)
    h, b = rd_bandwidth(x, y, config.p, config.q, config.kernel, config.nnmatch)
    return {"h": h, "b": b}


def estimate_rd(panel: MonthlyPanel, config: RdConfig) -> RdEstimate:
    """RD estimate for one outcome of a monthly panel.

    With an MSE-optimal bandwidth that leaves fewer than ``p + 2`` months on
    a side, the bandwidth is widened to the smallest window that works and
    a warning is attached to the result.
    """
    _check_cutoff(panel, config)
    x, y = outcome_series(panel, config)
    kern = as_kernel(config.kernel)
    warnings: list[str] = []
    bw = select_bandwidth_mserd(panel, config)
    h, b = bw["h"], bw["b"]
    if config.bandwidth == "mserd":
        h_min = max(_min_window(-x[x < 0], config.p + 2, kern), _min_window(x[x >= 0], config.p + 2, kern))
        if h < h_min:
            warnings.append(f"mserd bandwidth {h:.2f} widened to {h_min:.2f} months to keep {config.p + 2} months per side")
            h = h_min
        b_min = max(_min_window(-x[x < 0], config.q + 2, kern), _min_window(x[x >= 0], config.q + 2, kern))
        b = max(b, h, b_min)
    est = rd_estimate(x, y, h, b, config.p, config.q, kern, config.nnmatch)
    return replace(
        est,
        bandwidth_type=config.bandwidth_type,
        cutoff=format_month(panel.cutoff_index),
        outcome=config.outcome,
        warnings=tuple(warnings),
    )
