"""Component ablations, the gaze-distance sweep and the hypotheses x steps grid."""

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import geometry as geo
from ..model import ModelConfig
from .evaluate import evaluate
from .train import TrainConfig, train

log = logging.getLogger(__name__)

VARIANTS = {
    "full": {},
    "no_diffusion": {"use_diffusion": False},
    "no_objects": {"use_objects": False},
    "no_context": {"use_context": False},
}
DISTANCES = (0.1, 0.2, 0.3, 0.5, 1.0)
GRID = ((1, 1), (1, 20), (20, 1), (5, 5), (20, 20))
FIELDS = ("kind", "variant", "seed", "H", "N", "distance", "n", "mae3d", "mae3d_object", "mae2d", "mpjpe")


def with_gaze_distance(records, dist):
    """Copies of ``records`` whose gaze joint sits ``dist`` m from the eyes."""
    out = []
    for r in records:
        pose = r.pose3d_gt.copy()
        pose[geo.GAZE] = geo.gaze_joint_from_direction(pose[geo.LEYE], pose[geo.REYE], r.gaze_gt, dist)
        out.append(dataclasses.replace(r, pose3d_gt=pose))
    return out


@dataclass
class AblationResult:
    rows: list = field(default_factory=list)
    models: dict = field(default_factory=dict)      # (variant, seed) -> model
    reports: dict = field(default_factory=dict)     # (variant, seed, H, N) -> EvalReport

    def select(self, **match):
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def value(self, metric="mae3d", **match):
        rows = self.select(**match)
        if not rows:
            raise KeyError(f"no ablation row matches {match}")
        return float(np.mean([r[metric] for r in rows]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=FIELDS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _row(kind, variant, seed, H, N, distance, report):
    s = report.get(variant, "AVG")
    obj = s.object_driven
    return {
        "kind": kind, "variant": variant, "seed": seed, "H": H, "N": N, "distance": distance,
        "n": len(s),
        "mae3d": float(np.mean(s.mae3d)),
        "mae3d_object": float(np.mean(s.mae3d[obj])) if obj.any() else float("nan"),
        "mae2d": float(np.nanmean(s.mae2d)),
        "mpjpe": float(np.mean(s.mpjpe)),
    }


def ablate(train_records, test_records, variants=("full", "no_objects", "no_diffusion", "no_context"),
           seeds=(0,), train_cfg=None, model_cfg=None, distances=(), grid=(), H=20, N=20,
           out_dir=None, keep_models=False):
    """Train and evaluate every (variant, seed); optionally sweep the gaze
    distance and the (H, N) grid with the full model. Returns an
    :class:`AblationResult`; with ``out_dir`` also writes CSV and plots."""
    variants = list(variants)
    if not variants:
        raise ValueError("variant list is empty")
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; choose from {sorted(VARIANTS)}")
    train_cfg = train_cfg or TrainConfig()
    model_cfg = model_cfg or ModelConfig()
    res = AblationResult()

    def fit(records, variant, seed):
        mc = dataclasses.replace(model_cfg, **VARIANTS[variant])
        tc = dataclasses.replace(train_cfg, seed=seed)
        log.info("training %s seed %d", variant, seed)
        return train(records, tc, mc)

    need_full = bool(grid) and "full" not in variants
    for seed in seeds:
        for variant in variants + (["full"] if need_full else []):
            out = fit(train_records, variant, seed)
            if keep_models or (variant == "full" and grid):
                res.models[(variant, seed)] = out.model
            if variant in variants:
                rep = evaluate(out.model, test_records, H, N, modes=("AVG",), seed=seed, method=variant)
                res.reports[(variant, seed, H, N)] = rep
                res.rows.append(_row("variant", variant, seed, H, N, geo.DEFAULT_GAZE_DISTANCE, rep))
        for h, n in grid:
            model = res.models[("full", seed)]
            rep = res.reports.get(("full", seed, h, n))
            if rep is None:
                rep = evaluate(model, test_records, h, n, modes=("AVG",), seed=seed, method="full")
                res.reports[("full", seed, h, n)] = rep
            res.rows.append(_row("grid", "full", seed, h, n, geo.DEFAULT_GAZE_DISTANCE, rep))
        if not keep_models:
            res.models.pop(("full", seed), None)
        for dist in distances:
            tr = with_gaze_distance(train_records, dist)
            te = with_gaze_distance(test_records, dist)
            out = fit(tr, "full", seed)
            rep = evaluate(out.model, te, H, N, modes=("AVG",), seed=seed, method="full")
            res.rows.append(_row("distance", "full", seed, H, N, dist, rep))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        res.to_csv(out_dir / "ablation.csv")
        plot_ablation(res, out_dir)
    return res


def plot_ablation(res, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    written = []
    var = [r for r in res.rows if r["kind"] == "variant"]
    if var:
        names = list(dict.fromkeys(r["variant"] for r in var))
        fig, ax = plt.subplots(figsize=(6, 3.5))
        x = np.arange(len(names))
        ax.bar(x - 0.2, [res.value(kind="variant", variant=v) for v in names], 0.4, label="all")
        ax.bar(x + 0.2, [res.value("mae3d_object", kind="variant", variant=v) for v in names], 0.4,
               label="object-driven")
        ax.set_xticks(x)
        ax.set_xticklabels(names)
        ax.set_ylabel("MAE 3D (deg)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / "ablation_variants.png")
        plt.close(fig)
        written.append(out_dir / "ablation_variants.png")
    dist = [r for r in res.rows if r["kind"] == "distance"]
    if dist:
        ds = sorted({r["distance"] for r in dist})
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(ds, [res.value(kind="distance", distance=d) for d in ds], "o-")
        ax.set_xlabel("gaze joint distance (m)")
        ax.set_ylabel("MAE 3D (deg)")
        fig.tight_layout()
        fig.savefig(out_dir / "ablation_distance.png")
        plt.close(fig)
        written.append(out_dir / "ablation_distance.png")
    cells = [r for r in res.rows if r["kind"] == "grid"]
    if cells:
        Hs = sorted({r["H"] for r in cells})
        Ns = sorted({r["N"] for r in cells})
        img = np.full((len(Hs), len(Ns)), np.nan)
        for i, h in enumerate(Hs):
            for j, n in enumerate(Ns):
                if res.select(kind="grid", H=h, N=n):
                    img[i, j] = res.value(kind="grid", H=h, N=n)
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        im = ax.imshow(img, cmap="viridis")
        ax.set_xticks(range(len(Ns)))
        ax.set_xticklabels(Ns)
        ax.set_yticks(range(len(Hs)))
        ax.set_yticklabels(Hs)
        ax.set_xlabel("N (steps)")
        ax.set_ylabel("H (hypotheses)")
        fig.colorbar(im, label="MAE 3D (deg)")
        fig.tight_layout()
        fig.savefig(out_dir / "ablation_grid.png")
        plt.close(fig)
        written.append(out_dir / "ablation_grid.png")
    return written
