import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hdpid.metrics import (
    CHANNELS,
    channel_metrics,
    compare_report,
    final_value,
    format_table,
    itae,
    max_overshoot,
    peak_time,
    report_csv,
)

signals = arrays(np.float64, st.integers(2, 200), elements=st.floats(-10, 10, allow_nan=False))


def test_itae_closed_forms():
    assert itae(np.zeros(100), 0.01) == 0.0
    dt = 1e-3
    t = dt * np.arange(2001)
    assert itae(np.ones_like(t), dt) == pytest.approx(2.0, abs=1e-9)
    t = dt * np.arange(1001)
    # trapezoid on t^2 overshoots by dt^2 / 6 over [0, 1]
    assert itae(t, dt) == pytest.approx(1.0 / 3.0, abs=dt * dt / 6 + 1e-12)
    assert itae(t, dt) - dt * dt / 6 == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert itae(-t, dt) == itae(t, dt)


def test_itae_edge_cases():
    with pytest.raises(ValueError):
        itae([], 0.1)
    assert itae([5.0], 0.1) == 0.0


@settings(max_examples=50, deadline=None)
@given(signals, st.floats(-5, 5, allow_nan=False))
def test_itae_scales_linearly(e, a):
    assert itae(a * e, 0.01) == pytest.approx(abs(a) * itae(e, 0.01), rel=1e-12, abs=1e-12)
    assert itae(e, 0.01) >= 0.0


def test_peak_time_examples():
    s = np.zeros(5000)
    s[3000] = -2.0
    assert peak_time(s, 1e-3) == pytest.approx(3.0)
    assert peak_time(np.full(10, 0.7), 0.1) == 0.0
    assert peak_time(np.linspace(5, 0, 50), 0.1) == 0.0
    with pytest.raises(ValueError):
        peak_time([], 0.1)


def test_max_overshoot_examples():
    t = np.linspace(0, 10, 1001)
    assert max_overshoot(1 - np.exp(-t)) == 0.0
    step = 1 - np.exp(-t)
    step[200] = 1.2
    assert max_overshoot(step, final=1.0) == pytest.approx(0.2)
    assert max_overshoot(np.full(100, 0.3)) == 0.0
    # decaying oscillation around zero starting from a positive value
    e = np.exp(-0.5 * t) * np.cos(2 * t)
    expected = -np.min(e - final_value(e))
    assert max_overshoot(e) == pytest.approx(expected)
    with pytest.raises(ValueError):
        max_overshoot([])


def test_final_value_window():
    s = np.r_[np.zeros(95), np.ones(5)]
    assert final_value(s) == 1.0
    assert final_value([4.0]) == 4.0


@settings(max_examples=50, deadline=None)
@given(signals, st.integers(1, 50))
def test_trailing_zeros(e, extra):
    padded = np.r_[e, np.zeros(extra)]
    assert peak_time(padded, 0.1) == peak_time(e, 0.1)
    if np.all(e == 0):
        assert max_overshoot(padded) == 0.0
    m = channel_metrics(e, 0.1)
    assert m.itae >= 0 and 0 <= m.peak_time <= 0.1 * (e.size - 1)


def test_trailing_zeros_after_settling():
    t = np.linspace(0, 5, 501)
    e = np.exp(-t) * np.cos(3 * t)
    e[-50:] = 0.0
    padded = np.r_[e, np.zeros(40)]
    assert max_overshoot(padded) == pytest.approx(max_overshoot(e))
    assert itae(padded, 0.01) == pytest.approx(itae(e, 0.01))


def columns(rng, n=500):
    out = {"t": 0.01 * np.arange(n)}
    for ch in CHANNELS:
        out[ch] = rng.normal(size=n) * np.exp(-out["t"])
    return out


def test_identical_trajectories_give_unit_ratios():
    c = columns(np.random.default_rng(0))
    rows = compare_report(c, c)
    assert len(rows) == 12
    assert all(r["ratio"] == 1.0 for r in rows)
    assert {r["channel"] for r in rows} == set(CHANNELS)


def test_ratio_direction():
    rng = np.random.default_rng(1)
    a = columns(rng)
    b = {k: (v if k == "t" else 0.5 * v) for k, v in a.items()}
    rows = compare_report(a, b)
    for r in rows:
        if r["metric"] == "itae":
            assert r["ratio"] == pytest.approx(0.5)


def test_grid_mismatch():
    rng = np.random.default_rng(2)
    a = columns(rng)
    b = columns(rng, n=400)
    with pytest.raises(ValueError):
        compare_report(a, b)
    c = dict(a, t=a["t"] * 2)
    with pytest.raises(ValueError):
        compare_report(a, c)


def test_report_outputs(tmp_path):
    c = columns(np.random.default_rng(3))
    rows = compare_report(c, c)
    text = report_csv(rows, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == text
    assert text.splitlines()[0] == "channel,metric,K,K+dK,ratio"
    table = format_table(rows).splitlines()
    assert len(table) == 14
    assert len({len(line.rstrip()) for line in table[2:]}) >= 1
    assert table[0].split() == ["channel", "metric", "K", "K+dK", "ratio"]


def test_zero_baseline_ratio():
    c = {"t": np.arange(3) * 0.1, **{ch: np.zeros(3) for ch in CHANNELS}}
    d = dict(c, e_chi=np.array([0.0, 1.0, 0.0]))
    rows = compare_report(c, d)
    r = next(r for r in rows if r["channel"] == "e_chi" and r["metric"] == "itae")
    assert math.isinf(r["ratio"])
