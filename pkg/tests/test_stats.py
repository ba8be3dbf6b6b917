"""Descriptive-statistics oracle tests and comparison-report behavior."""

import math

import numpy as np
import pytest

from lanesim.episode import EpisodeLog
from lanesim.stats import ComparisonReport, SeriesStats, compare_report, describe


def brute_force_stats(values, mode_bin=1.0):
    """Plain-loop re-implementation used as the oracle for describe()."""
    xs = sorted(float(v) for v in values)
    n = len(xs)
    lo, hi = xs[0], xs[-1]
    mean = sum(xs) / n
    if n % 2 == 1:
        median = xs[n // 2]
    else:
        median = (xs[n // 2 - 1] + xs[n // 2]) / 2.0
    var = sum((v - mean) ** 2 for v in xs) / n
    counts = {}
    for v in xs:
        k = math.floor(v / mode_bin)
        counts[k] = counts.get(k, 0) + 1
    best_k = min(k for k, c in counts.items() if c == max(counts.values()))
    mode = (best_k + 0.5) * mode_bin
    mode = min(max(mode, lo), hi)
    return lo, hi, mean, median, mode, math.sqrt(var), hi - lo


def test_describe_simple_series():
    s = describe([1.0, 2.0, 3.0])
    assert s.min == 1.0 and s.max == 3.0 and s.range == 2.0
    assert s.mean == 2.0 and s.median == 2.0
    # population std dev of {1,2,3}
    assert abs(s.std_dev - math.sqrt(2.0 / 3.0)) < 1e-15
    # three singleton bins tie; the smallest bin (k=1, center 1.5) wins
    assert s.mode == 1.5


def test_describe_matches_brute_force_oracle_on_large_series():
    rng = np.random.default_rng(123)
    x = rng.normal(20.0, 250.0, size=10_000)
    s = describe(x)
    lo, hi, mean, median, mode, std, rng_ = brute_force_stats(x)
    assert abs(s.min - lo) < 1e-9
    assert abs(s.max - hi) < 1e-9
    assert abs(s.mean - mean) < 1e-9
    assert abs(s.median - median) < 1e-9
    assert abs(s.mode - mode) < 1e-9
    assert abs(s.std_dev - std) < 1e-9
    assert abs(s.range - rng_) < 1e-9


def test_describe_even_length_median_midpoint():
    assert describe([1.0, 2.0, 3.0, 10.0]).median == 2.5


def test_describe_mode_bin_and_tie_rules():
    # bin [0,1) holds two values, [4,5) holds two: tie resolves to smaller bin
    s = describe([0.2, 0.8, 4.1, 4.9])
    assert s.mode == 0.5
    # wider bins group differently
    s2 = describe([0.2, 0.8, 4.1, 4.9], mode_bin=5.0)
    assert s2.mode == min(max(2.5, 0.2), 4.9)


def test_describe_mode_clamped_into_data_range():
    # bin center 10.5 exceeds the data max; the mode clamps to it
    s = describe([10.0, 10.2])
    assert s.mode == 10.2
    s2 = describe([-10.2, -10.0])
    assert s2.mode == -10.2


def test_describe_negative_values_floor_division():
    # floor(-0.5) = -1, so negatives land in bin [-1, 0)
    s = describe([-0.5, -0.4, 3.0])
    assert s.mode == -0.5  # center -0.5 of bin k=-1


def test_describe_rejects_bad_input():
    with pytest.raises(ValueError):
        describe([])
    with pytest.raises(ValueError):
        describe([1.0, float("nan")])
    with pytest.raises(ValueError):
        describe([1.0, float("inf")])
    with pytest.raises(ValueError):
        describe([[1.0, 2.0]])
    with pytest.raises(ValueError):
        describe([1.0, 2.0], mode_bin=0.0)


def _fake_log(name, deflections, steerings, **meta_overrides):
    meta = {
        "track": "t",
        "detector": "blob",
        "controller": name,
        "seed": 0,
        "dt": 0.05,
        "duration": 1.0,
        "status": "completed",
    }
    meta.update(meta_overrides)
    log = EpisodeLog(meta=meta)
    for i, (d, s) in enumerate(zip(deflections, steerings)):
        log.append(
            t=i * 0.05, x=0.0, y=0.0, psi=0.0, v=0.0,
            deflection=d, steering=s, speed_cmd=0.5,
            lateral_offset=0.0, heading_error=0.0, detector_failure=False,
        )
    return log


def test_compare_report_builds_stats_and_meta():
    logs = {
        "normal": _fake_log("normal", [0, 90, -90], [0, 90, 45]),
        "pid": _fake_log("pid", [10, 20, 30], [44, 45, 46]),
        "neural": _fake_log("neural", [5, 5, 5], [45, 45, 45]),
    }
    rep = compare_report(logs)
    assert rep.stats["steering"]["neural"].std_dev == 0.0
    assert rep.signal_winner("steering") == "neural"
    assert rep.signal_winner("deflection") == "neural"
    assert rep.best_controller() == "neural"
    assert rep.meta["statuses"]["pid"] == "completed"


def test_compare_report_rejects_mismatched_runs():
    logs = {
        "normal": _fake_log("normal", [0.0], [45.0]),
        "pid": _fake_log("pid", [0.0], [45.0]),
        "neural": _fake_log("neural", [0.0], [45.0], seed=9),
    }
    with pytest.raises(ValueError, match="seed"):
        compare_report(logs)
    with pytest.raises(ValueError, match="missing"):
        compare_report({"pid": logs["pid"]})


def _stats_of(std):
    return SeriesStats(min=0, max=1, mean=0, median=0, mode=0, std_dev=std, range=1)


def test_best_controller_normalizes_each_signal():
    # neural wins steering by a lot, loses deflection by a little -> best overall
    stats = {
        "deflection": {"normal": _stats_of(400.0), "pid": _stats_of(300.0), "neural": _stats_of(310.0)},
        "steering": {"normal": _stats_of(20.0), "pid": _stats_of(15.0), "neural": _stats_of(9.0)},
    }
    rep = ComparisonReport(stats=stats, meta={})
    assert rep.best_controller() == "neural"


def test_report_render_and_csv_shape():
    logs = {
        "normal": _fake_log("normal", [0, 90, -90], [0, 90, 45]),
        "pid": _fake_log("pid", [10, 20, 30], [44, 45, 46]),
        "neural": _fake_log("neural", [5, 5, 5], [45, 45, 45]),
    }
    rep = compare_report(logs)
    csv = rep.to_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "param,signal,normal,pid,neural"
    assert len(lines) == 1 + 7 * 2  # header + 7 stats x 2 signals
    text = rep.render_text()
    assert "Deflection" in text and "Steering" in text
    assert "standard-deviation criterion: neural" in text
