"""Acceptance suite: one pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as
they print. Each criterion states its tolerance and runtime budget;
oracles here are written independently of the implementation under
test (direct formulas, literal enumeration, exhaustive search).
"""

import itertools
import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import rankdata

from mortbench.bridge import AdapterSpec, WireMessage, start_adapter
from mortbench.classical import (
    ArimaOrder,
    FitError,
    auto_arima,
    fit_arima,
    fit_holt,
    forecast_holt,
)
from mortbench.cli import EXIT_OK, main
from mortbench.config import RunConfig
from mortbench.engine import run_backtest
from mortbench.forest import ForestConfig, forecast_forest, train_forest
from mortbench.leecarter import fit_lee_carter, forecast_lee_carter
from mortbench.lifetables import MortalitySurface, SeriesKey
from mortbench.stats import (
    _average_ranks_doubled,
    _normal_two_sided_p,
    smape,
    wilcoxon_signed_rank,
)
from mortbench.synthetic import synthetic_corpus
from mortbench.training import GlobalTrainingSet, TrainingWindow

FIXTURE = str(Path(__file__).parent / "fixtures" / "misbehave.py")


def _report(ok: bool, name: str, detail: str) -> None:
    print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")


def test_smape_oracle_equivalence():
    # 1,000 random (A, F) pairs; |artifact - direct formula| <= 1e-10; < 1s
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        a = rng.gamma(2.0, 0.01, n) * (rng.random(n) > 0.05)
        f = rng.gamma(2.0, 0.01, n) * (rng.random(n) > 0.05)
        denom = np.abs(a) + np.abs(f)
        terms = np.divide(
            2.0 * np.abs(f - a), denom, out=np.zeros(n), where=denom > 0
        )
        oracle = 100.0 * float(terms.mean())
        worst = max(worst, abs(smape(a, f) - oracle))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 1.0
    _report(ok, "SMAPE oracle equivalence", f"max|delta|={worst:.2e} in {elapsed:.2f}s")
    assert worst <= 1e-10
    assert elapsed < 1.0


def _enumeration_oracle(diffs: np.ndarray) -> float:
    # independent ranking (scipy) + literal walk over all sign patterns
    d = diffs[diffs != 0.0]
    if d.size == 0:
        return 1.0
    ranks2 = (2.0 * rankdata(np.abs(d))).astype(np.int64)
    total = int(ranks2.sum())
    w_obs = int(min(ranks2[d > 0].sum(), ranks2[d < 0].sum()))
    idx = np.arange(2 ** d.size, dtype=np.uint32)
    bits = (idx[:, None] >> np.arange(d.size)) & 1
    w = bits.astype(np.int64) @ ranks2
    hits = int(np.count_nonzero((w <= w_obs) | (w >= total - w_obs)))
    return min(1.0, hits / 2.0 ** d.size)


def test_wilcoxon_exactness():
    # all n <= 10, 200 vectors each: exact equality with the 2^n
    # enumeration oracle; at n=20 the normal approximation stays
    # within 0.01 of enumeration; < 30s
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    checked = 0
    for n in range(1, 11):
        for _ in range(200):
            d = rng.integers(-4, 5, n).astype(float)
            assert wilcoxon_signed_rank(d) == _enumeration_oracle(d)
            checked += 1
    worst_gap = 0.0
    for _ in range(50):
        d = rng.normal(0.3, 1.0, 20)
        dd = d[d != 0.0]
        ranks2 = _average_ranks_doubled(np.abs(dd))
        w_plus2 = int(ranks2[dd > 0].sum())
        p_normal = _normal_two_sided_p(w_plus2, ranks2)
        p_enum = _enumeration_oracle(d)
        worst_gap = max(worst_gap, abs(p_normal - p_enum))
    elapsed = time.perf_counter() - start
    ok = worst_gap <= 0.01 and elapsed < 30.0
    _report(
        ok,
        "Wilcoxon exactness",
        f"{checked} exact matches, n=20 normal gap={worst_gap:.4f} in {elapsed:.1f}s",
    )
    assert worst_gap <= 0.01
    assert elapsed < 30.0


def test_lee_carter_recovery():
    # rank-1 surface from known (a, b, k): fitted vectors within 1e-8;
    # with linear k the 20-year forecast SMAPE vs truth < 0.1; < 5s
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    ages = np.arange(111)
    a = -9.0 + 0.07 * ages
    b = rng.random(111) + 0.1
    b /= b.sum()
    t = np.arange(60, dtype=float)
    k = -0.5 * (t - t.mean())  # linear, sums to zero
    rates = np.exp(a[None, :] + np.outer(k, b))
    surface = MortalitySurface(
        "SYN", list(range(1950, 2010)), rates, np.zeros_like(rates, dtype=bool)
    )
    fit = fit_lee_carter(surface, 1)
    comp = fit.components[0]
    b_err = float(np.max(np.abs(comp.b - b)))
    k_err = float(np.max(np.abs(comp.k - k)))
    a_err = float(np.max(np.abs(fit.a - a)))
    forecast = forecast_lee_carter(fit, 20)
    k_future = -0.5 * (np.arange(60, 80) - t.mean())
    truth = np.exp(a[None, :] + np.outer(k_future, b))
    fc_smape = smape(truth.ravel(), forecast.ravel())
    elapsed = time.perf_counter() - start
    ok = max(b_err, k_err, a_err) <= 1e-8 and fc_smape < 0.1 and elapsed < 5.0
    _report(
        ok,
        "Lee-Carter recovery",
        f"max param err={max(b_err, k_err, a_err):.2e}, 20y forecast "
        f"SMAPE={fc_smape:.4f} in {elapsed:.2f}s",
    )
    assert b_err <= 1e-8 and k_err <= 1e-8 and a_err <= 1e-8
    assert fc_smape < 0.1
    assert elapsed < 5.0


def _exhaustive_best_aicc(y: np.ndarray, d: int, max_pq: int = 2) -> float:
    best = np.inf
    for p in range(max_pq + 1):
        for q in range(max_pq + 1):
            try:
                fit = fit_arima(y, ArimaOrder(p, d, q, d <= 1))
            except FitError:
                continue
            best = min(best, fit.aicc)
    return float(best)


def test_auto_arima_sanity():
    # seeded simulations: white noise -> d=0, random walk with drift ->
    # d=1, AR(1) phi=0.7 within +-0.1 and within 2 AICc of exhaustive
    # search; < 60s
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    wn = rng.normal(0, 1, 300)
    fit_wn = auto_arima(wn)
    rw = np.cumsum(rng.normal(0.5, 1.0, 300))
    fit_rw = auto_arima(rw)
    rng2 = np.random.default_rng(0)
    e = rng2.normal(0.0, 1.0, 500)
    ar = np.zeros(500)
    for i in range(1, 500):
        ar[i] = 0.7 * ar[i - 1] + e[i]
    fit_ar = auto_arima(ar)
    phi = float(fit_ar.ar_coeffs[0]) if fit_ar.order.p else 0.0
    oracle = _exhaustive_best_aicc(ar, 0)
    elapsed = time.perf_counter() - start
    ok = (
        fit_wn.order.d == 0
        and fit_rw.order.d == 1
        and abs(phi - 0.7) <= 0.1
        and fit_ar.aicc <= oracle + 2.0
        and elapsed < 60.0
    )
    _report(
        ok,
        "AutoARIMA sanity",
        f"wn d={fit_wn.order.d}, rw d={fit_rw.order.d}, phi={phi:.3f}, "
        f"aicc-oracle={fit_ar.aicc - oracle:+.2f} in {elapsed:.1f}s",
    )
    assert fit_wn.order.d == 0
    assert fit_rw.order.d == 1
    assert abs(phi - 0.7) <= 0.1
    assert fit_ar.aicc <= oracle + 2.0
    assert elapsed < 60.0


def test_holt_exactness():
    # exactly linear series: forecast error <= 1e-6 at all 20 steps
    t = np.arange(40, dtype=float)
    y = 3.0 - 0.05 * t
    forecast = forecast_holt(fit_holt(y), 20)
    truth = 3.0 - 0.05 * (40 + np.arange(20))
    worst = float(np.max(np.abs(forecast - truth)))
    ok = worst <= 1e-6
    _report(ok, "Holt exactness", f"max step error={worst:.2e} over 20 steps")
    assert worst <= 1e-6


def _window_set(X: np.ndarray, y: np.ndarray) -> GlobalTrainingSet:
    windows = tuple(
        TrainingWindow(SeriesKey("SYN", i // 50), 1900 + i % 50, X[i], float(y[i]))
        for i in range(len(y))
    )
    return GlobalTrainingSet(windows, X.shape[1])


def test_random_forest():
    # memorization, identity-task RMSE < 1% of std, bit-determinism,
    # forecast bounds; < 60s at 5,000 windows
    start = time.perf_counter()
    rng = np.random.default_rng(3)

    X_small = rng.random((64, 16))
    y_small = rng.random(64)
    tree = train_forest(
        _window_set(X_small, y_small),
        ForestConfig(n_trees=1, bootstrap=False, seed=0),
    )
    memorized = bool(np.array_equal(tree.predict(X_small), y_small))

    X = rng.random((5000, 16))
    y = X[:, 15].copy()
    data = _window_set(X, y)
    model = train_forest(data, ForestConfig(seed=0))
    rmse = float(np.sqrt(np.mean((model.predict(X) - y) ** 2)))
    rmse_ok = rmse < 0.01 * float(y.std())

    twin = train_forest(data, ForestConfig(seed=0))
    probe = rng.random((100, 16))
    deterministic = bool(np.array_equal(model.predict(probe), twin.predict(probe)))

    series = rng.random(30)
    forecast = forecast_forest(model, series, 20)
    bounded = bool(np.all(forecast >= y.min()) and np.all(forecast <= y.max()))

    elapsed = time.perf_counter() - start
    ok = memorized and rmse_ok and deterministic and bounded and elapsed < 60.0
    _report(
        ok,
        "Random Forest",
        f"memorize={memorized}, identity rmse={rmse:.4f} "
        f"(<{0.01 * float(y.std()):.4f}), deterministic={deterministic}, "
        f"bounded={bounded} in {elapsed:.1f}s",
    )
    assert memorized and rmse_ok and deterministic and bounded
    assert elapsed < 60.0


def _masked(surface: MortalitySurface, keep: set) -> MortalitySurface:
    rates = surface.rates.copy()
    mask = surface.missing_mask.copy()
    for age in range(rates.shape[1]):
        if age not in keep:
            rates[:, age] = np.nan
            mask[:, age] = True
    return MortalitySurface(surface.country_code, list(surface.years), rates, mask)


def test_leakage_sentinel():
    # poisoning validation cells must leave every forecast bit-identical
    corpus = [_masked(s, {30, 70}) for s in synthetic_corpus(0)]
    poisoned = []
    for surface in corpus:
        rates = surface.rates.copy()
        rates[-5:][~surface.missing_mask[-5:]] = 5.0
        poisoned.append(
            MortalitySurface(
                surface.country_code,
                list(surface.years),
                rates,
                surface.missing_mask.copy(),
            )
        )
    methods = [
        "ARIMA",
        "ExponentialSmoothing",
        "LeeCarter",
        "LeeCarterMULTI",
        "RandomForest",
    ]
    clean = run_backtest(corpus, methods, RunConfig())
    dirty = run_backtest(poisoned, methods, RunConfig())
    same = len(clean.records) == len(dirty.records) > 0 and all(
        a.predicted == b.predicted for a, b in zip(clean.records, dirty.records)
    )
    _report(
        same,
        "Leakage sentinel",
        f"{len(clean.records)} records bit-identical under validation poison",
    )
    assert same


def test_end_to_end_synthetic(tmp_path):
    # full CLI pipeline on the bundled synthetic corpus with the paper
    # default horizons; all report artifacts; LeeCarter median SMAPE
    # beats the constant baseline; < 10 min
    start = time.perf_counter()
    registry = tmp_path / "registry.json"
    registry.write_text(
        json.dumps(
            [
                {
                    "name": "constant",
                    "command": [sys.executable, "-m", "mortbench.adapters.constant"],
                }
            ]
        )
    )
    hmd, corpus, run, fut, rep = (
        str(tmp_path / name) for name in ("hmd", "corpus", "run", "fut", "report")
    )
    assert main(["synth", "--out", hmd]) == EXIT_OK
    assert main(["ingest", "--hmd-dir", hmd, "--out", corpus]) == EXIT_OK
    corpus_csv = str(Path(corpus) / "corpus.csv")
    assert (
        main(
            [
                "backtest",
                "--corpus",
                corpus_csv,
                "--methods",
                "ARIMA,ExponentialSmoothing,LeeCarter,LeeCarterMULTI,RandomForest,constant",
                "--horizons",
                "5,10,20",
                "--adapters",
                str(registry),
                "--out",
                run,
            ]
        )
        == EXIT_OK
    )
    assert (
        main(
            [
                "backtest",
                "--corpus",
                corpus_csv,
                "--methods",
                "LeeCarter,constant",
                "--adapters",
                str(registry),
                "--future",
                "--out",
                fut,
            ]
        )
        == EXIT_OK
    )
    assert (
        main(
            [
                "report",
                "--records",
                str(Path(run) / "records.csv"),
                "--future-records",
                str(Path(fut) / "future_records.csv"),
                "--corpus",
                corpus_csv,
                "--income-map",
                str(Path(hmd) / "income_map.json"),
                "--by",
                "method,age,income,length",
                "--significance",
                "--plots",
                "boxplot,heatmap,trajectories",
                "--country",
                "SYA",
                "--ages",
                "25,50,75",
                "--deterministic",
                "--out",
                rep,
            ]
        )
        == EXIT_OK
    )
    expected = {
        "manifest.json",
        "summary.csv",
        "grouped_age.csv",
        "grouped_income.csv",
        "grouped_length.csv",
        "significance.csv",
        "scores.csv",
        "boxplot_method.svg",
        "heatmap_age.svg",
        "heatmap_income.svg",
        "heatmap_length.svg",
        "trajectory_SYA.csv",
        "trajectory_SYA.svg",
    }
    produced = {p.name for p in Path(rep).iterdir()}
    medians = {}
    for line in (Path(rep) / "summary.csv").read_text().splitlines()[2:]:
        parts = line.split(",")
        medians[parts[0]] = float(parts[2])
    elapsed = time.perf_counter() - start
    ok = (
        expected <= produced
        and medians["LeeCarter"] < medians["constant"]
        and elapsed < 600.0
    )
    _report(
        ok,
        "End-to-end synthetic run",
        f"artifacts={len(produced)}, LeeCarter median={medians['LeeCarter']:.2f} "
        f"< constant={medians['constant']:.2f} in {elapsed:.0f}s",
    )
    assert expected <= produced
    assert medians["LeeCarter"] < medians["constant"]
    assert elapsed < 600.0


def _random_message(rng) -> WireMessage:
    types = (
        "hello",
        "capabilities",
        "forecast",
        "forecast_result",
        "train",
        "train_result",
        "error",
    )
    fields = {"type": types[rng.integers(len(types))]}
    text = lambda: "".join(
        chr(rng.integers(32, 127)) for _ in range(rng.integers(0, 12))
    )
    optional = {
        "id": text,
        "name": text,
        "protocol": lambda: int(rng.integers(0, 10)),
        "start_year": lambda: int(rng.integers(1800, 2100)),
        "values": lambda: [float(v) for v in rng.normal(0, 1, rng.integers(0, 8))],
        "horizon": lambda: int(rng.integers(1, 30)),
        "tag": text,
        "message": text,
        "path": text,
        "params": lambda: {text(): float(rng.normal())},
        "supports_training": lambda: bool(rng.integers(2)),
        "deterministic": lambda: bool(rng.integers(2)),
    }
    for name, make in optional.items():
        if rng.random() < 0.4:
            fields[name] = make()
    return WireMessage(**fields)


def test_protocol_conformance():
    # constant adapter: handshake, batching, out-of-order matching,
    # timeout, restart; 1,000 random valid messages round-trip exactly
    rng = np.random.default_rng(17)
    fuzz_ok = all(
        WireMessage.from_json(m.to_json()) == m
        for m in (_random_message(rng) for _ in range(1000))
    )

    constant = AdapterSpec(
        name="constant", command=(sys.executable, "-m", "mortbench.adapters.constant")
    )
    with start_adapter(constant) as handle:
        handshake_ok = (
            handle.adapter_name == "constant" and not handle.supports_training
        )
        batch = [
            {"id": f"r{i}", "start_year": 1990, "values": [1.0, 2.0, 0.4 + i], "horizon": 4}
            for i in range(3)
        ]
        out = handle.request_forecast(batch)
        batch_ok = all(
            o.ok and o.values == pytest.approx([0.4 + i] * 4)
            for i, o in enumerate(out)
        )

    with start_adapter(
        AdapterSpec(
            name="rev", command=(sys.executable, FIXTURE, "reverse", "--count", "3")
        )
    ) as handle:
        out = handle.request_forecast(batch)
        order_ok = all(
            o.id == f"r{i}" and o.ok and o.values == pytest.approx([0.4 + i] * 4)
            for i, o in enumerate(out)
        )

    with start_adapter(
        AdapterSpec(
            name="sleep", command=(sys.executable, FIXTURE, "sleep"), timeout=1.0
        )
    ) as handle:
        t0 = time.perf_counter()
        out = handle.request_forecast(batch[:1])
        waited = time.perf_counter() - t0
        timeout_ok = not out[0].ok and waited < 1.0 + 1.0 + 1.5

    marker = Path(FIXTURE).parent / f"acc_marker_{time.time_ns()}"
    try:
        with start_adapter(
            AdapterSpec(
                name="do",
                command=(
                    sys.executable,
                    FIXTURE,
                    "die-once",
                    "--marker",
                    str(marker),
                ),
                timeout=5.0,
            )
        ) as handle:
            first = handle.request_forecast(batch[:1])
            second = handle.request_forecast(batch[:1])
            restart_ok = not first[0].ok and second[0].ok
    finally:
        marker.unlink(missing_ok=True)

    ok = fuzz_ok and handshake_ok and batch_ok and order_ok and timeout_ok and restart_ok
    _report(
        ok,
        "Protocol conformance",
        f"fuzz={fuzz_ok}, handshake={handshake_ok}, batch={batch_ok}, "
        f"out-of-order={order_ok}, timeout={timeout_ok}, restart={restart_ok}",
    )
    assert ok
