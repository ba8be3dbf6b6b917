"""Descriptive statistics and the three-controller comparison table."""

from dataclasses import dataclass

import numpy as np

STAT_ROWS = ("Min", "Max", "Mean", "Median", "Mode", "Std. dev.", "Range")
SIGNALS = ("deflection", "steering")
CONTROLLERS = ("normal", "pid", "neural")

# Metadata keys that must agree for runs to be comparable.
COMPARABLE_KEYS = ("track", "detector", "seed", "duration", "dt")


@dataclass(frozen=True)
class SeriesStats:
    min: float
    max: float
    mean: float
    median: float
    mode: float
    std_dev: float
    range: float

    def as_row_map(self) -> dict:
        return {
            "Min": self.min,
            "Max": self.max,
            "Mean": self.mean,
            "Median": self.median,
            "Mode": self.mode,
            "Std. dev.": self.std_dev,
            "Range": self.range,
        }


def describe(series, mode_bin: float = 1.0) -> SeriesStats:
    """Summary statistics of a numeric series.

    Median uses the midpoint convention for even lengths; std dev is the
    population form (divide by n); the mode is the center of the most
    populous half-open histogram bin [k*b, (k+1)*b) of width ``mode_bin``
    (ties go to the smaller k), clamped into [min, max].
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise ValueError(f"series must be a non-empty 1-D sequence, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("series contains non-finite values")
    if mode_bin <= 0:
        raise ValueError(f"mode_bin must be > 0, got {mode_bin}")

    lo = float(x.min())
    hi = float(x.max())
    bins = np.floor(x / mode_bin).astype(np.int64)
    uniq, counts = np.unique(bins, return_counts=True)
    k = int(uniq[int(np.argmax(counts))])  # np.unique sorts, argmax takes first max
    mode = (k + 0.5) * mode_bin
    mode = min(max(mode, lo), hi)

    return SeriesStats(
        min=lo,
        max=hi,
        mean=float(x.mean()),
        median=float(np.median(x)),
        mode=mode,
        std_dev=float(x.std()),
        range=hi - lo,
    )


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    """Per-controller stats for the deflection and steering signals."""

    stats: dict  # stats[signal][controller] -> SeriesStats
    meta: dict

    def best_controller(self) -> str:
        """Winner by smoothness: smallest summed std dev, each signal
        normalized by its across-controller mean so both signals weigh in."""
        scores = {}
        for name in CONTROLLERS:
            total = 0.0
            for signal in SIGNALS:
                stds = [self.stats[signal][c].std_dev for c in CONTROLLERS]
                denom = sum(stds) / len(stds)
                total += self.stats[signal][name].std_dev / denom if denom > 0 else 0.0
            scores[name] = total
        return min(CONTROLLERS, key=lambda c: (scores[c], CONTROLLERS.index(c)))

    def signal_winner(self, signal: str) -> str:
        return min(CONTROLLERS, key=lambda c: (self.stats[signal][c].std_dev,
                                               CONTROLLERS.index(c)))

    def to_csv(self) -> str:
        lines = ["param,signal,normal,pid,neural"]
        for signal in SIGNALS:
            rows = {c: self.stats[signal][c].as_row_map() for c in CONTROLLERS}
            for param in STAT_ROWS:
                vals = ",".join(format(rows[c][param], ".6g") for c in CONTROLLERS)
                lines.append(f"{param},{signal},{vals}")
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        col = 11
        out = []
        title = {"deflection": "Deflection", "steering": "Steering"}
        for signal in SIGNALS:
            out.append(title[signal])
            header = "".join(c.capitalize().rjust(col) for c in CONTROLLERS)
            out.append("Param".ljust(12) + header)
            rows = {c: self.stats[signal][c].as_row_map() for c in CONTROLLERS}
            for param in STAT_ROWS:
                cells = "".join(format(rows[c][param], ".6g").rjust(col) for c in CONTROLLERS)
                out.append(param.ljust(12) + cells)
            out.append(f"lowest std. dev.: {self.signal_winner(signal)}")
            out.append("")
        out.append(f"best by the standard-deviation criterion: {self.best_controller()}")
        return "\n".join(out) + "\n"


def compare_report(logs: dict, mode_bin: float = 1.0) -> ComparisonReport:
    """Build the comparison table from the three controller episode logs.

    ``logs`` maps controller name -> EpisodeLog.  Logs must agree on the
    track, detector, seed, duration, and step size; anything else is an
    apples-to-oranges comparison and raises ValueError.
    """
    missing = [c for c in CONTROLLERS if c not in logs]
    if missing:
        raise ValueError(f"missing controller logs: {', '.join(missing)}")

    reference = logs[CONTROLLERS[0]].meta
    for name in CONTROLLERS[1:]:
        for key in COMPARABLE_KEYS:
            a, b = reference.get(key), logs[name].meta.get(key)
            if a != b:
                raise ValueError(
                    f"logs are not comparable: meta[{key!r}] differs "
                    f"({CONTROLLERS[0]}={a!r}, {name}={b!r})"
                )

    stats = {signal: {} for signal in SIGNALS}
    for name in CONTROLLERS:
        log = logs[name]
        stats["deflection"][name] = describe(log.deflection, mode_bin)
        stats["steering"][name] = describe(log.steering, mode_bin)

    meta = {key: reference.get(key) for key in COMPARABLE_KEYS}
    meta["statuses"] = {name: logs[name].meta.get("status") for name in CONTROLLERS}
    return ComparisonReport(stats=stats, meta=meta)
