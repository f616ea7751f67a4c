"""Per-series statistical forecasters: ARIMA (CSS) and Holt smoothing.

ARIMA models are estimated by conditional sum of squares: the d-times
differenced series w_t follows

    w_t = c + phi_1 w_{t-1} + ... + phi_p w_{t-p}
              + e_t + theta_1 e_{t-1} + ... + theta_q e_{t-q}

with e_t = 0 inside the conditioning region t <= p. Stationarity of the
AR part and invertibility of the MA part are enforced by optimizing in
a partial-autocorrelation parameterization (tanh-squashed, mapped
through the Durbin-Levinson recursion), so every point the optimizer
can reach is admissible.

Order selection follows the usual automated recipe: the differencing
order comes from repeated KPSS level-stationarity tests at 5%, then a
stepwise neighbourhood search over (p, q) minimizes AICc. A random walk
with drift, ARIMA(0,1,0) plus constant, is always scored as a benchmark
candidate and also serves as the fallback when every other candidate
fails.

Holt's linear-trend smoother is fit by bounded numerical minimization
of the one-step squared-error sum over (alpha, beta, level_0, trend_0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import optimize

MAX_P = 5
MAX_Q = 5
MAX_D = 2
KPSS_CRIT_5PCT = 0.463  # level-stationarity critical value, Kwiatkowski et al. Table 1
_SIGMA2_FLOOR = 1e-300


class FitError(RuntimeError):
    """Estimation failed: optimizer did not converge or the optimum is inadmissible."""


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int
    with_constant: bool = False

    def __post_init__(self) -> None:
        if not (0 <= self.p <= MAX_P and 0 <= self.q <= MAX_Q):
            raise ValueError(f"p,q must be in 0..{MAX_P}")
        if not 0 <= self.d <= MAX_D:
            raise ValueError(f"d must be in 0..{MAX_D}")

    @property
    def k_params(self) -> int:
        # +1 counts the innovation variance
        return self.p + self.q + int(self.with_constant) + 1


@dataclass
class ArimaFit:
    order: ArimaOrder
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    constant: float
    sigma2: float
    aicc: float


@dataclass
class HoltFit:
    alpha: float
    beta: float
    level_0: float
    trend_0: float
    sse: float
    # state after consuming the training series; forecasts extend from here
    final_level: float = 0.0
    final_trend: float = 0.0


@njit(cache=True)
def _css_residuals(w: np.ndarray, phi: np.ndarray, theta: np.ndarray, c: float) -> np.ndarray:
    n = w.shape[0]
    p = phi.shape[0]
    q = theta.shape[0]
    e = np.zeros(n)
    for t in range(p, n):
        acc = w[t] - c
        for i in range(p):
            acc -= phi[i] * w[t - 1 - i]
        for j in range(q):
            if t - 1 - j >= 0:
                acc -= theta[j] * e[t - 1 - j]
        e[t] = acc
    return e


@njit(cache=True)
def _css_sse(w: np.ndarray, phi: np.ndarray, theta: np.ndarray, c: float) -> float:
    e = _css_residuals(w, phi, theta, c)
    p = phi.shape[0]
    sse = 0.0
    for t in range(p, w.shape[0]):
        sse += e[t] * e[t]
    return sse


def _pacf_to_coeffs(pacf: np.ndarray) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations in (-1,1) to
    the coefficients of a stationary AR polynomial."""
    coeffs = np.zeros_like(pacf)
    for k in range(pacf.shape[0]):
        r = pacf[k]
        coeffs[:k] = coeffs[:k] - r * coeffs[:k][::-1]
        coeffs[k] = r
    return coeffs


def _unpack_params(x: np.ndarray, p: int, q: int, with_constant: bool):
    i = 0
    c = 0.0
    if with_constant:
        c = x[0]
        i = 1
    phi = _pacf_to_coeffs(np.tanh(x[i : i + p]))
    # 1 + sum theta_j B^j invertible iff -theta is a stationary AR vector
    theta = -_pacf_to_coeffs(np.tanh(x[i + p : i + p + q]))
    return c, phi, theta


def _poly_roots_outside_unit_circle(coeffs: np.ndarray) -> bool:
    # roots of 1 - sum a_i z^i; pass -theta to check the MA polynomial 1 + sum theta_j z^j
    if coeffs.size == 0:
        return True
    poly = np.concatenate(([1.0], -coeffs))
    roots = np.roots(poly[::-1])
    return bool(np.all(np.abs(roots) > 1.0 + 1e-9))


def _difference(values: np.ndarray, d: int) -> np.ndarray:
    w = np.asarray(values, dtype=float)
    for _ in range(d):
        w = np.diff(w)
    return w


def _loglik_and_aicc(
    sse: float, n_full: int, n_eff: int, order: ArimaOrder
) -> tuple[float, float, float]:
    # sigma2 averages over the n_eff conditioned residuals, but the
    # likelihood length is the full differenced sample so that scores
    # of models with different p are comparable (conditioning drops p
    # residuals, which would otherwise make large p look cheaper).
    sigma2 = sse / n_eff
    safe = max(sigma2, _SIGMA2_FLOOR)
    loglik = -0.5 * n_full * (math.log(2.0 * math.pi * safe) + 1.0)
    k = order.k_params
    if n_full - k - 1 <= 0:
        raise FitError(f"sample too small for AICc with order {order}")
    aicc = -2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1) / (n_full - k - 1)
    return sigma2, loglik, aicc


def _fit_ar_ols(w: np.ndarray, p: int, with_constant: bool):
    """Exact CSS optimum for pure AR models via least squares."""
    n = w.shape[0]
    rows = n - p
    cols = p + int(with_constant)
    if cols == 0:
        return 0.0, np.zeros(0), float(np.dot(w, w))
    X = np.empty((rows, cols))
    col = 0
    if with_constant:
        X[:, 0] = 1.0
        col = 1
    for i in range(p):
        X[:, col + i] = w[p - 1 - i : n - 1 - i]
    y = w[p:]
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    c = beta[0] if with_constant else 0.0
    phi = beta[1:] if with_constant else beta
    return float(c), np.asarray(phi), float(np.dot(resid, resid))


def fit_arima(values, order: ArimaOrder) -> ArimaFit:
    """Estimate an ARIMA model of the given order by CSS.

    The series is differenced ``order.d`` times, internally rescaled to
    unit variance (results are mapped back, so fits are exactly
    scale-equivariant), and the conditional Gaussian likelihood is
    maximized. Raises :class:`FitError` on non-convergence or when the
    optimum violates stationarity/invertibility.
    """
    y = np.asarray(values, dtype=float)
    w = _difference(y, order.d)
    n = w.shape[0]
    if n < order.p + order.q + 5:
        raise FitError(
            f"series too short for order {order}: {n} points after differencing"
        )

    scale = float(np.std(w))
    if scale <= 0.0 or not np.isfinite(scale):
        scale = 1.0
    wn = w / scale

    p, q, with_constant = order.p, order.q, order.with_constant
    if q == 0:
        c_n, phi, sse_n = _fit_ar_ols(wn, p, with_constant)
        theta = np.zeros(0)
        if not _poly_roots_outside_unit_circle(phi):
            c_n, phi, theta, sse_n = _fit_css_numeric(wn, order)
    else:
        c_n, phi, theta, sse_n = _fit_css_numeric(wn, order)

    sigma2, _, aicc = _loglik_and_aicc(sse_n * scale * scale, n, n - p, order)
    # aicc above is computed on the original scale via the rescaled SSE
    return ArimaFit(
        order=order,
        ar_coeffs=phi,
        ma_coeffs=theta,
        constant=float(c_n * scale),
        sigma2=sigma2,
        aicc=aicc,
    )


def _fit_css_numeric(wn: np.ndarray, order: ArimaOrder):
    p, q, with_constant = order.p, order.q, order.with_constant

    def objective(x: np.ndarray) -> float:
        c, phi, theta = _unpack_params(x, p, q, with_constant)
        return _css_sse(wn, phi, theta, c)

    n_params = p + q + int(with_constant)
    if n_params == 0:
        return 0.0, np.zeros(0), np.zeros(0), float(np.dot(wn, wn))

    x0 = np.zeros(n_params)
    if with_constant:
        x0[0] = float(np.mean(wn))
    best = None
    for method in ("L-BFGS-B", "Nelder-Mead"):
        try:
            res = optimize.minimize(objective, x0, method=method)
        except (ValueError, FloatingPointError):
            continue
        if np.all(np.isfinite(res.x)) and (best is None or res.fun < best.fun):
            best = res
        if best is not None and best.fun <= objective(x0):
            break
    if best is None:
        raise FitError(f"CSS optimizer failed for order {order}")

    c, phi, theta = _unpack_params(best.x, p, q, with_constant)
    if not _poly_roots_outside_unit_circle(phi):
        raise FitError(f"AR polynomial not stationary at optimum for {order}")
    if not _poly_roots_outside_unit_circle(-theta):
        raise FitError(f"MA polynomial not invertible at optimum for {order}")
    return float(c), phi, theta, float(best.fun)


def forecast_arima(fit: ArimaFit, values, horizon: int) -> np.ndarray:
    """Iterated conditional-expectation forecasts for ``horizon`` steps.

    MA terms draw on the in-sample CSS residuals and are zero beyond
    the sample; differencing is inverted by cumulative summation.
    """
    if horizon <= 0:
        return np.zeros(0)
    y = np.asarray(values, dtype=float)
    d = fit.order.d
    w = _difference(y, d)
    phi, theta = fit.ar_coeffs, fit.ma_coeffs
    p, q = phi.shape[0], theta.shape[0]
    e = _css_residuals(w, phi, theta, fit.constant) if (p or q) else np.zeros(w.shape[0])

    n = w.shape[0]
    w_ext = np.concatenate([w, np.zeros(horizon)])
    e_ext = np.concatenate([e, np.zeros(horizon)])
    for k in range(horizon):
        t = n + k
        acc = fit.constant
        for i in range(p):
            acc += phi[i] * w_ext[t - 1 - i]
        for j in range(q):
            if t - 1 - j < n:
                acc += theta[j] * e_ext[t - 1 - j]
        w_ext[t] = acc

    fc = w_ext[n:]
    for level in range(d - 1, -1, -1):
        anchor = _difference(y, level)[-1]
        fc = anchor + np.cumsum(fc)
    return fc


def kpss_statistic(values, lags: int | None = None) -> float:
    """KPSS statistic for the null of level stationarity.

    Long-run variance uses the Bartlett kernel with the short Schwert
    truncation lag trunc(4 * (n/100)^(1/4)) unless ``lags`` is given.
    A zero-variance (constant) series scores 0, i.e. stationary.
    """
    x = np.asarray(values, dtype=float)
    n = x.shape[0]
    resids = x - x.mean()
    if lags is None:
        lags = int(4.0 * (n / 100.0) ** 0.25)
    lags = min(lags, n - 1)
    s2 = float(np.dot(resids, resids))
    for i in range(1, lags + 1):
        gamma = float(np.dot(resids[i:], resids[: n - i]))
        s2 += 2.0 * (1.0 - i / (lags + 1.0)) * gamma
    s2 /= n
    if s2 <= 0.0:
        return 0.0
    eta = float(np.sum(np.cumsum(resids) ** 2)) / (n * n)
    return eta / s2


def choose_differencing(values, max_d: int = MAX_D) -> int:
    """Difference until the KPSS test stops rejecting level stationarity at 5%."""
    w = np.asarray(values, dtype=float)
    d = 0
    while d < max_d and w.shape[0] >= 3 and kpss_statistic(w) > KPSS_CRIT_5PCT:
        w = np.diff(w)
        d += 1
    return d


_STEPWISE_START = ((0, 0), (1, 0), (0, 1), (2, 2))


def auto_arima(values, max_p: int = MAX_P, max_q: int = MAX_Q, max_d: int = MAX_D) -> ArimaFit:
    """Automatic ARIMA selection: KPSS differencing plus stepwise (p, q) search.

    The constant is included whenever d <= 1. The random walk with
    drift, (0,1,0) with constant, is always evaluated alongside the
    stepwise candidates, so the returned fit never scores worse than
    that benchmark; it is also the fallback when everything else fails.
    """
    y = np.asarray(values, dtype=float)
    if y.shape[0] < 10:
        raise ValueError(f"auto_arima needs at least 10 observations, got {y.shape[0]}")

    d = choose_differencing(y, max_d=max_d)
    with_constant = d <= 1

    tried: dict[tuple[int, int], ArimaFit | None] = {}

    def evaluate(p: int, q: int) -> ArimaFit | None:
        if (p, q) in tried:
            return tried[(p, q)]
        fit = None
        if y.shape[0] - d >= p + q + 5:
            try:
                fit = fit_arima(y, ArimaOrder(p, d, q, with_constant))
            except FitError:
                fit = None
        tried[(p, q)] = fit
        return fit

    best: ArimaFit | None = None
    for p, q in _STEPWISE_START:
        fit = evaluate(p, q)
        if fit is not None and (best is None or fit.aicc < best.aicc):
            best = fit

    improved = best is not None
    while improved:
        improved = False
        bp, bq = best.order.p, best.order.q
        neighbours = [
            (bp + 1, bq), (bp - 1, bq), (bp, bq + 1), (bp, bq - 1),
            (bp + 1, bq + 1), (bp - 1, bq - 1),
        ]
        for p, q in neighbours:
            if not (0 <= p <= max_p and 0 <= q <= max_q):
                continue
            fit = evaluate(p, q)
            if fit is not None and fit.aicc < best.aicc:
                best = fit
                improved = True
                break

    try:
        benchmark = fit_arima(y, ArimaOrder(0, 1, 0, with_constant=True))
    except FitError:
        benchmark = None
    if benchmark is not None and (best is None or benchmark.aicc < best.aicc):
        best = benchmark
    if best is None:
        raise FitError("auto_arima: every candidate failed, including the fallback")
    return best


@njit(cache=True)
def _holt_pass(y: np.ndarray, alpha: float, beta: float, l0: float, b0: float):
    level = l0
    trend = b0
    sse = 0.0
    for t in range(y.shape[0]):
        err = y[t] - (level + trend)
        sse += err * err
        new_level = alpha * y[t] + (1.0 - alpha) * (level + trend)
        trend = beta * (new_level - level) + (1.0 - beta) * trend
        level = new_level
    return sse, level, trend


def fit_holt(values) -> HoltFit:
    """Fit Holt's additive-trend smoother by one-step SSE minimization.

    Smoothing weights and initial states are optimized jointly from a
    small deterministic multistart (a least-squares line and the naive
    first-differences heuristic). The series is standardized internally
    so the fit is exactly scale- and shift-equivariant. If optimization
    fails entirely, falls back to alpha=0.8, beta=0.2 with heuristic
    initial states.
    """
    y = np.asarray(values, dtype=float)
    n = y.shape[0]
    if n < 4:
        raise ValueError(f"fit_holt needs at least 4 observations, got {n}")

    m = float(np.mean(y))
    s = float(np.std(y))
    if s <= 0.0 or not np.isfinite(s):
        s = 1.0
    z = (y - m) / s

    def objective(x: np.ndarray) -> float:
        a = min(max(x[0], 0.0), 1.0)
        b = min(max(x[1], 0.0), 1.0)
        sse, _, _ = _holt_pass(z, a, b, x[2], x[3])
        return sse

    t = np.arange(n)
    slope, intercept = np.polyfit(t, z, 1)
    starts = []
    for a, b in ((0.8, 0.2), (0.5, 0.1), (0.2, 0.05)):
        starts.append(np.array([a, b, intercept - slope, slope]))
        starts.append(np.array([a, b, z[0], z[1] - z[0]]))

    bounds = [(0.0, 1.0), (0.0, 1.0), (None, None), (None, None)]
    best_x = None
    best_sse = np.inf
    for x0 in starts:
        try:
            res = optimize.minimize(objective, x0, method="L-BFGS-B", bounds=bounds)
        except (ValueError, FloatingPointError):
            continue
        if np.all(np.isfinite(res.x)) and res.fun < best_sse:
            best_sse = float(res.fun)
            best_x = res.x
    if best_x is None:
        best_x = np.array([0.8, 0.2, z[0], z[1] - z[0]])

    alpha = float(min(max(best_x[0], 0.0), 1.0))
    beta = float(min(max(best_x[1], 0.0), 1.0))
    sse_z, level_z, trend_z = _holt_pass(z, alpha, beta, best_x[2], best_x[3])
    return HoltFit(
        alpha=alpha,
        beta=beta,
        level_0=float(best_x[2] * s + m),
        trend_0=float(best_x[3] * s),
        sse=float(sse_z * s * s),
        final_level=float(level_z * s + m),
        final_trend=float(trend_z * s),
    )


def forecast_holt(fit: HoltFit, horizon: int) -> np.ndarray:
    """Linear extension of the final state: level_T + k * trend_T."""
    if horizon <= 0:
        return np.zeros(0)
    k = np.arange(1, horizon + 1, dtype=float)
    return fit.final_level + k * fit.final_trend
