"""Time-domain performance indices and before/after comparison tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

CHANNELS = ("e_gamma", "e_chi", "de_gamma", "de_chi")
METRICS = ("itae", "peak_time", "max_overshoot")


@dataclass(frozen=True)
class ChannelMetrics:
    itae: float
    peak_time: float
    max_overshoot: float


def itae(signal, dt: float) -> float:
    """Trapezoidal ``integral t |e(t)| dt`` over a uniform grid starting at 0."""
    e = np.abs(np.asarray(signal, dtype=float))
    if e.size == 0:
        raise ValueError("empty signal")
    if e.size == 1:
        return 0.0
    y = dt * np.arange(e.size) * e
    return float(dt * (y.sum() - 0.5 * (y[0] + y[-1])))


def peak_time(signal, dt: float) -> float:
    """Grid time of the largest ``|e|``; the earliest sample wins ties."""
    e = np.abs(np.asarray(signal, dtype=float))
    if e.size == 0:
        raise ValueError("empty signal")
    return float(np.argmax(e) * dt)


def _tail_length(size: int, tail: float) -> int:
    return max(1, int(math.ceil(tail * size)))


def final_value(signal, tail: float = 0.05) -> float:
    """Mean of the trailing ``tail`` fraction of the samples."""
    s = np.asarray(signal, dtype=float)
    return float(np.mean(s[-_tail_length(s.size, tail):]))


def max_overshoot(signal, final=None, tail: float = 0.05) -> float:
    """Largest excursion past the final value in the direction of approach.

    The direction is from the first sample towards the final value.  By
    default the final value is the mean of the trailing window and only the
    samples before that window are searched, so the spread inside the
    window (residual noise) does not count as overshoot.  A signal that
    starts at its final value has no overshoot.
    """
    s = np.asarray(signal, dtype=float)
    if s.size == 0:
        raise ValueError("empty signal")
    if final is None:
        fv = final_value(s, tail)
        k = _tail_length(s.size, tail)
        body = s[:-k] if s.size > k else s
    else:
        fv = float(final)
        body = s
    direction = np.sign(fv - s[0])
    if direction == 0:
        return 0.0
    return float(max(0.0, np.max(direction * (body - fv))))


def channel_metrics(signal, dt: float) -> ChannelMetrics:
    return ChannelMetrics(itae(signal, dt), peak_time(signal, dt), max_overshoot(signal))


def _ratio(after: float, before: float) -> float:
    if after == before:
        return 1.0
    if before == 0.0:
        return math.inf
    return after / before


def compare_report(traj_K, traj_comp) -> list[dict]:
    """Metrics of both runs for each error channel, with ``after / before`` ratios.

    The arguments are trajectories (or mappings of CSV columns to arrays) on
    the same time grid.
    """
    a, b = _columns(traj_K), _columns(traj_comp)
    ta, tb = a["t"], b["t"]
    if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=0, atol=1e-12):
        raise ValueError("trajectories are not on the same time grid")
    dt = float(ta[1] - ta[0]) if ta.size > 1 else 0.0
    rows = []
    for ch in CHANNELS:
        ma = channel_metrics(a[ch], dt)
        mb = channel_metrics(b[ch], dt)
        for name in METRICS:
            before, after = getattr(ma, name), getattr(mb, name)
            rows.append(
                {"channel": ch, "metric": name, "K": before, "K+dK": after, "ratio": _ratio(after, before)}
            )
    return rows


def _columns(traj) -> dict:
    if isinstance(traj, dict):
        return traj
    return {name: traj.channel(name) for name in ("t",) + CHANNELS}


def report_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["channel", "metric", "K", "K+dK", "ratio"])
    for r in rows:
        w.writerow([r["channel"], r["metric"], repr(float(r["K"])), repr(float(r["K+dK"])), repr(float(r["ratio"]))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def format_table(rows) -> str:
    head = ("channel", "metric", "K", "K+dK", "ratio")
    body = [
        (r["channel"], r["metric"], f"{r['K']:.6g}", f"{r['K+dK']:.6g}", f"{r['ratio']:.4g}")
        for r in rows
    ]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for b in body:
        lines.append("  ".join(v.rjust(w) if i > 1 else v.ljust(w) for i, (v, w) in enumerate(zip(b, widths))))
    return "\n".join(lines)
