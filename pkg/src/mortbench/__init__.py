"""Mortality-rate forecasting benchmark toolkit.

Ingests HMD-style 1x1 life tables, runs a panel of forecasters
(AutoARIMA, Holt, Lee-Carter variants, a global autoregressive random
forest, and external adapters attached over a line-delimited JSON
protocol), and evaluates point forecasts with SMAPE plus significance
analysis over grouped populations.
"""

__version__ = "0.1.0"

PROTOCOL_VERSION = 1
