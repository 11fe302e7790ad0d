"""Model evaluation and the two non-learned gaze baselines."""

import numpy as np
import torch

from .. import geometry as geo
from ..diffusion import AGGREGATIONS, make_schedule, sample_hypotheses
from ..errors import DegenerateMean
from ..model import make_batch, make_denoiser
from .report import EvalReport, SampleMetrics


def record_seed(seed, record_id):
    """Sampling seed of one test record; independent of batch composition."""
    return int(seed) * 1_000_000 + int(record_id)


def gaze_metrics(pred_gaze, records):
    """MAE_3D / MAE_2D per sample. An undefined prediction (NaN) counts as 180°."""
    pred_gaze = np.asarray(pred_gaze, dtype=np.float64)
    gt = np.stack([r.gaze_gt for r in records])
    bad = ~np.all(np.isfinite(pred_gaze), axis=-1)
    safe = np.where(bad[:, None], 1.0, pred_gaze)
    mae3d = np.where(bad, 180.0, geo.angular_error_3d(safe, gt))
    mae2d = np.array([geo.angular_error_2d_or_nan(safe[i], gt[i], r.camera) for i, r in enumerate(records)])
    gt_ok = np.array([np.linalg.norm(r.camera.image_plane(r.gaze_gt)) >= 1e-9 for r in records])
    mae2d = np.where(bad & gt_ok, 180.0, mae2d)
    return mae3d, mae2d


def metrics_from_skeletons(pred, records):
    """Metrics for predicted root-centered skeletons ``(B, J, 3)`` in meters."""
    gt = np.stack([geo.root_center(r.pose3d_gt) for r in records])
    mae3d, mae2d = gaze_metrics(geo.gaze_vectors_or_nan(pred), records)
    return SampleMetrics([r.id for r in records], [r.tag for r in records],
                         [r.object_driven for r in records], mae3d, mae2d, geo.mpjpe(pred, gt))


def evaluate_hypotheses(hyp, records, modes=AGGREGATIONS, method="model"):
    """Aggregate ``hyp`` ``(B, H, J, 3)`` (meters, root-centered) per mode."""
    from ..diffusion import aggregate

    gt = np.stack([geo.root_center(r.pose3d_gt) for r in records])
    rep = EvalReport()
    for mode in modes:
        agg = aggregate(hyp, mode, gt if mode != "AVG" else None)
        rep.add(method, mode, metrics_from_skeletons(agg, records))
    return rep


def sample_records(model, records, H=20, N=20, seed=0, batch_size=50, sched=None):
    """Hypotheses for every record, ``(B, H, J, 3)`` in meters, root-centered."""
    cfg = model.cfg
    sched = sched or make_schedule(cfg.T, cfg.schedule)
    dtype = next(model.parameters()).dtype
    out = []
    model.eval()
    for i in range(0, len(records), batch_size):
        chunk = records[i:i + batch_size]
        batch = make_batch(chunk, cfg, dtype=dtype, with_target=False)
        with torch.no_grad():
            cond = model.encode_condition(batch)
        den = make_denoiser(model, cond, H)
        if not cfg.use_diffusion:
            # direct regression: one deterministic prediction, replicated
            x0 = den(np.zeros((len(chunk), H, cfg.J, 3)), 0)
            out.append(x0 * cfg.pose_scale)
            continue
        sets = sample_hypotheses(den, H, N, [record_seed(seed, r.id) for r in chunk], sched, cfg.J)
        out.append(np.stack([s.hypotheses for s in sets]) * cfg.pose_scale)
    return np.concatenate(out)


def evaluate(model, records, H=20, N=20, modes=AGGREGATIONS, seed=0, method="model", batch_size=50,
             return_hypotheses=False):
    if not records:
        raise ValueError("empty evaluation set")
    hyp = sample_records(model, records, H, N, seed, batch_size)
    rep = evaluate_hypotheses(hyp, records, modes, method)
    return (rep, hyp) if return_hypotheses else rep


def _baseline_metrics(pred_gaze, records):
    mae3d, mae2d = gaze_metrics(pred_gaze, records)
    return SampleMetrics([r.id for r in records], [r.tag for r in records],
                         [r.object_driven for r in records], mae3d, mae2d,
                         np.full(len(records), np.nan))


def mean_gaze_direction(train_records):
    if not train_records:
        raise ValueError("empty training split")
    g = np.stack([r.gaze_gt for r in train_records])
    g = g / np.linalg.norm(g, axis=-1, keepdims=True)
    m = g.mean(axis=0)
    n = np.linalg.norm(m)
    if n < 1e-9:
        raise DegenerateMean(f"mean training gaze has norm {n:.3g}")
    return m / n


def baseline_fixed_bias(train_records, test_records):
    """Predict the renormalized mean training gaze for every test sample.

    Gaze vectors live in each record's camera frame, so the constant is a
    camera-frame direction.
    """
    if not test_records:
        raise ValueError("empty test split")
    g = mean_gaze_direction(train_records)
    pred = np.broadcast_to(g, (len(test_records), 3))
    return EvalReport().add("fixed_bias", "-", _baseline_metrics(pred, test_records))


def baseline_frontal_gaze(test_records):
    """Predict the face-normal direction from the ground-truth eyes and head."""
    if not test_records:
        raise ValueError("empty test split")
    pred = np.stack([geo.frontal_direction(r.pose3d_gt) for r in test_records])
    return EvalReport().add("frontal", "-", _baseline_metrics(pred, test_records))
