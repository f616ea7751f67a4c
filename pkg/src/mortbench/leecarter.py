"""Lee-Carter mortality model with rank-1 and rank-3 SVD variants.

The model decomposes the log-mortality surface into an age profile plus
one or more bilinear age/period terms:

    log m(x, t) = a_x + sum_i b_x^i k_t^i

fitted by singular value decomposition of the centered log matrix.
Forecasting extends each period index k_t by a pluggable trend method:
random walk with drift (the classic choice), a full AutoARIMA search,
or an arbitrary callable (used to route the trend through an external
adapter). Rates are reconstructed through the exponential, so forecasts
are positive by construction.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .classical import auto_arima, forecast_arima
from .lifetables import DEFAULT_CLIP_FLOOR, N_AGES, MortalitySurface

__all__ = [
    "LeeCarterComponent",
    "LeeCarterFit",
    "fit_lee_carter",
    "forecast_lee_carter",
    "extend_trend",
    "fit_to_csv",
    "TREND_RW_DRIFT",
    "TREND_RW",
    "TREND_AUTO_ARIMA",
]

TREND_RW_DRIFT = "rw_drift"
TREND_RW = "rw"
TREND_AUTO_ARIMA = "auto_arima"

TrendMethod = str | Callable[[np.ndarray, int], np.ndarray]

MIN_TRAIN_YEARS = 10
# relative threshold below which an SVD component is treated as zero
_DEGENERATE_REL_TOL = 1e-12


@dataclass(frozen=True)
class LeeCarterComponent:
    """One bilinear term: age loadings b (sum 1), period index k (sum 0)."""

    b: np.ndarray
    k: np.ndarray
    singular_value: float


@dataclass(frozen=True)
class LeeCarterFit:
    country_code: str
    a: np.ndarray
    components: tuple[LeeCarterComponent, ...]
    train_years: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.a.shape != (N_AGES,):
            raise ValueError(f"age profile must have shape ({N_AGES},)")
        n_years = len(self.train_years)
        for comp in self.components:
            if comp.b.shape != (N_AGES,) or comp.k.shape != (n_years,):
                raise ValueError("component shapes do not match fit dimensions")

    def reconstruct_log(self) -> np.ndarray:
        """Fitted log-rate matrix [n_years, 111]."""
        out = np.tile(self.a, (len(self.train_years), 1))
        for comp in self.components:
            out += np.outer(comp.k, comp.b)
        return out


def _completed_log_rates(surface: MortalitySurface, clip_floor: float) -> np.ndarray:
    """Dense log-rate matrix with missing cells interpolated per age.

    Interior gaps are linearly interpolated along time; edge gaps take
    the nearest observed value; ages with no observations at all sit at
    the clip floor. Everything is clipped at the floor before the log.
    """
    n_years = len(surface.years)
    rates = np.array(surface.rates, dtype=float)
    t = np.arange(n_years, dtype=float)
    for x in range(N_AGES):
        observed = ~surface.missing_mask[:, x]
        if not observed.any():
            rates[:, x] = clip_floor
        elif not observed.all():
            rates[:, x] = np.interp(t, t[observed], rates[observed, x])
    return np.log(np.maximum(rates, clip_floor))


def _component_from_vectors(
    sigma: float, u_age: np.ndarray, v_time: np.ndarray, sigma_max: float
) -> LeeCarterComponent:
    """Normalize one SVD triplet to the (b, k) convention.

    b = u / sum(u) so the loadings sum to one and, because k picks up
    the same factor, negating both singular vectors leaves (b, k)
    unchanged. A zero singular value (or an age vector summing to zero,
    which cannot be normalized) degenerates to uniform loadings and a
    flat zero index.
    """
    scale = u_age.sum()
    tol = _DEGENERATE_REL_TOL * max(1.0, sigma_max)
    if sigma <= tol or abs(scale) <= _DEGENERATE_REL_TOL:
        return LeeCarterComponent(
            b=np.full(N_AGES, 1.0 / N_AGES),
            k=np.zeros(v_time.shape[0]),
            singular_value=0.0,
        )
    return LeeCarterComponent(
        b=u_age / scale,
        k=sigma * v_time * scale,
        singular_value=float(sigma),
    )


def fit_lee_carter(
    surface: MortalitySurface,
    n_components: int = 1,
    clip_floor: float = DEFAULT_CLIP_FLOOR,
) -> LeeCarterFit:
    """Fit the Lee-Carter decomposition to a training surface.

    Parameters
    ----------
    surface:
        Training window; all of its years are used. Must span at least
        10 years.
    n_components:
        Number of SVD terms to keep, 1 (classic) or 3 (the MULTI
        variant).
    clip_floor:
        Rates are clipped here before taking logs, so ages observed at
        zero still contribute a finite constant series.

    Returns
    -------
    LeeCarterFit
        With sum(b) = 1 and sum(k) = 0 per component; the recentering
        offset of each k is folded into the age profile so the fitted
        log surface is unchanged.
    """
    if n_components not in (1, 3):
        raise ValueError(f"n_components must be 1 or 3, got {n_components}")
    n_years = len(surface.years)
    if n_years < MIN_TRAIN_YEARS:
        raise ValueError(
            f"Lee-Carter needs at least {MIN_TRAIN_YEARS} training years, got {n_years}"
        )

    log_rates = _completed_log_rates(surface, clip_floor)
    a = log_rates.mean(axis=0)
    centered = log_rates - a

    # rows are years, columns ages: age vectors live in Vt, time in U
    u_mat, sing, vt = np.linalg.svd(centered, full_matrices=False)
    sigma_max = float(sing[0]) if sing.size else 0.0

    components = []
    for i in range(n_components):
        if i < sing.size:
            comp = _component_from_vectors(float(sing[i]), vt[i, :], u_mat[:, i], sigma_max)
        else:
            comp = _component_from_vectors(0.0, np.zeros(N_AGES), np.zeros(n_years), sigma_max)
        offset = comp.k.mean()
        if offset != 0.0:
            a = a + comp.b * offset
            comp = LeeCarterComponent(
                b=comp.b, k=comp.k - offset, singular_value=comp.singular_value
            )
        components.append(comp)

    return LeeCarterFit(
        country_code=surface.country_code,
        a=a,
        components=tuple(components),
        train_years=tuple(surface.years),
    )


def extend_trend(k: np.ndarray, horizon: int, method: TrendMethod) -> np.ndarray:
    """Extend a period index h steps beyond its last observation.

    ``rw_drift`` continues the average historical step (k_T - k_1)/(T-1),
    ``rw`` holds the last value, ``auto_arima`` runs the full stepwise
    order search, and a callable receives (k, horizon) and must return
    the h extension values itself.
    """
    if horizon <= 0:
        return np.zeros(0)
    if callable(method):
        out = np.asarray(method(k, horizon), dtype=float)
        if out.shape != (horizon,):
            raise ValueError(
                f"trend callable returned shape {out.shape}, expected ({horizon},)"
            )
        return out
    if method == TREND_RW_DRIFT:
        drift = (k[-1] - k[0]) / (len(k) - 1) if len(k) > 1 else 0.0
        return k[-1] + drift * np.arange(1, horizon + 1)
    if method == TREND_RW:
        return np.full(horizon, k[-1])
    if method == TREND_AUTO_ARIMA:
        return forecast_arima(auto_arima(k), k, horizon)
    raise ValueError(f"unknown trend method: {method!r}")


def forecast_lee_carter(
    fit: LeeCarterFit, horizon: int, trend_method: TrendMethod = TREND_RW_DRIFT
) -> np.ndarray:
    """Forecast the full rate surface ``horizon`` years ahead.

    Every component's k is extended with the same trend method and the
    log surface is reassembled; the result has shape [horizon, 111] and
    is strictly positive.
    """
    log_fc = np.tile(fit.a, (horizon, 1))
    for comp in fit.components:
        k_ext = extend_trend(comp.k, horizon, trend_method)
        log_fc += np.outer(k_ext, comp.b)
    return np.exp(log_fc)


def fit_to_csv(fit: LeeCarterFit) -> tuple[str, str]:
    """Export the fit as two CSV tables.

    Returns (age_table, period_table) with schemas
    ``country,component,age,a_x,b_x`` and ``country,component,year,k_t``.
    """
    ages = io.StringIO()
    ages.write("country,component,age,a_x,b_x\n")
    for ci, comp in enumerate(fit.components, start=1):
        for x in range(N_AGES):
            ages.write(
                f"{fit.country_code},{ci},{x},{float(fit.a[x])!r},{float(comp.b[x])!r}\n"
            )
    period = io.StringIO()
    period.write("country,component,year,k_t\n")
    for ci, comp in enumerate(fit.components, start=1):
        for year, k in zip(fit.train_years, comp.k):
            period.write(f"{fit.country_code},{ci},{year},{float(k)!r}\n")
    return ages.getvalue(), period.getvalue()
