"""Evaluation reports: per-sample metrics, per-tag/overall tables, CSV and plots."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

METRICS = ("mae3d", "mae2d", "mpjpe")
COLUMNS = ("method", "mode", "tag", "n", "mae3d", "mae2d", "mpjpe")


@dataclass
class SampleMetrics:
    """Per-sample metrics for one (method, mode) pair. NaN marks 'undefined'
    (MAE_2D for a ground-truth gaze along the camera axis, MPJPE for baselines
    that predict no skeleton)."""
    ids: np.ndarray
    tags: np.ndarray
    object_driven: np.ndarray
    mae3d: np.ndarray
    mae2d: np.ndarray
    mpjpe: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.tags = np.asarray(self.tags, dtype=object)
        self.object_driven = np.asarray(self.object_driven, dtype=bool)
        for m in METRICS:
            setattr(self, m, np.asarray(getattr(self, m), dtype=np.float64))

    def __len__(self):
        return len(self.ids)

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return SampleMetrics(self.ids[mask], self.tags[mask], self.object_driven[mask],
                             self.mae3d[mask], self.mae2d[mask], self.mpjpe[mask])

    @staticmethod
    def concat(parts):
        parts = list(parts)
        return SampleMetrics(*(np.concatenate([getattr(p, k) for p in parts])
                               for k in ("ids", "tags", "object_driven", *METRICS)))


def _mean(x):
    x = x[np.isfinite(x)]
    return float(x.mean()) if len(x) else float("nan")


@dataclass
class EvalReport:
    samples: dict = field(default_factory=dict)    # (method, mode) -> SampleMetrics

    def add(self, method, mode, metrics):
        self.samples[(method, mode)] = metrics
        return self

    def merge(self, other):
        self.samples.update(other.samples)
        return self

    def get(self, method, mode="AVG"):
        return self.samples[(method, mode)]

    def mean(self, method, mode="AVG", metric="mae3d", mask=None):
        s = self.get(method, mode)
        if mask is not None:
            s = s.subset(mask(s) if callable(mask) else mask)
        return _mean(getattr(s, metric))

    def rows(self):
        """One row per (method, mode, tag) plus an ``overall`` row each.

        Tag rows carry the count of samples with a defined value per metric, so
        the overall value is the count-weighted mean of the tag values.
        """
        out = []
        for (method, mode), s in self.samples.items():
            for tag in sorted(set(s.tags.tolist())) + ["overall"]:
                sub = s if tag == "overall" else s.subset(s.tags == tag)
                row = {"method": method, "mode": mode, "tag": tag, "n": len(sub)}
                for m in METRICS:
                    row[m] = _mean(getattr(sub, m))
                    row[f"n_{m}"] = int(np.isfinite(getattr(sub, m)).sum())
                out.append(row)
        return out

    def table(self):
        lines = [f"{'method':<14}{'mode':<7}{'tag':<13}{'n':>6}{'MAE3D':>9}{'MAE2D':>9}{'MPJPE':>9}"]
        for r in self.rows():
            lines.append(f"{r['method']:<14}{r['mode']:<7}{r['tag']:<13}{r['n']:>6}"
                         f"{r['mae3d']:>9.2f}{r['mae2d']:>9.2f}{r['mpjpe']:>9.1f}")
        return "\n".join(lines)

    def to_csv(self, path):
        rows = self.rows()
        fields = list(COLUMNS) + [f"n_{m}" for m in METRICS]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})

    def save_samples(self, path):
        """Per-sample metrics as CSV (enough to rebuild the report)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "mode", "id", "tag", "object_driven", *METRICS])
            for (method, mode), s in self.samples.items():
                for i in range(len(s)):
                    w.writerow([method, mode, int(s.ids[i]), s.tags[i], int(s.object_driven[i]),
                                *(repr(float(getattr(s, m)[i])) for m in METRICS)])

    @classmethod
    def load_samples(cls, path):
        groups = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                groups.setdefault((row["method"], row["mode"]), []).append(row)
        rep = cls()
        for key, rows in groups.items():
            rep.add(*key, SampleMetrics(
                [int(r["id"]) for r in rows], [r["tag"] for r in rows],
                [r["object_driven"] == "1" for r in rows],
                *([float(r[m]) for r in rows] for m in METRICS)))
        return rep


def read_csv_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("n", "n_mae3d", "n_mae2d", "n_mpjpe"):
            if k in r:
                r[k] = int(r[k])
        for m in METRICS:
            r[m] = float(r[m])
    return rows


def plot_report(report, path, mode="AVG"):
    """Bar chart of MAE_3D per tag, one bar group per method."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [r for r in report.rows() if r["mode"] in (mode, "-")]
    methods = list(dict.fromkeys(r["method"] for r in rows))
    tags = list(dict.fromkeys(r["tag"] for r in rows))
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.8 / max(1, len(methods))
    for k, method in enumerate(methods):
        vals = {r["tag"]: r["mae3d"] for r in rows if r["method"] == method}
        ax.bar(np.arange(len(tags)) + k * width, [vals.get(t, np.nan) for t in tags], width, label=method)
    ax.set_xticks(np.arange(len(tags)) + 0.4 - width / 2)
    ax.set_xticklabels(tags, rotation=20)
    ax.set_ylabel("MAE 3D (deg)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
