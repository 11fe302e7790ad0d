"""Conversion of scene records into model-ready tensors."""

from dataclasses import dataclass

import numpy as np
import torch

from .. import geometry as geo
from ..errors import TooManyObjects
from .features import OBJECT_REF_SIZE, build_hierarchical_features, object_scale

_FREQS = (1.0, 2.0, 4.0)
N_LOC_FEATURES = 3 + 4 * len(_FREQS) + 4

# Mean ratio of the tightest per-bone depth bound to the true eye depth under
# the scene prior (perspective makes the nearest bones look slightly longer).
DEPTH_BOUND_RATIO = 0.962
_BONES = np.array(geo.BONES)
_BONE_LENGTHS = None


def subject_depth_estimate(pose2d, focal):
    """Camera depth of the subject guessed from the 2D skeleton alone.

    A bone of length ``l`` seen at depth ``z`` projects to at most
    ``focal * l / z``, so every bone gives an upper bound on ``z``; the
    tightest bound, rescaled by its average bias, is the estimate.
    """
    global _BONE_LENGTHS
    if _BONE_LENGTHS is None:
        from ..scenes import PosePrior
        _BONE_LENGTHS = PosePrior().bone_table()
    pose2d = np.asarray(pose2d, dtype=np.float64)
    l2 = np.linalg.norm(pose2d[..., _BONES[:, 1], :] - pose2d[..., _BONES[:, 0], :], axis=-1)
    bounds = focal * _BONE_LENGTHS / np.maximum(l2, 1e-9)
    return bounds.min(axis=-1) / DEPTH_BOUND_RATIO


def _backproject(uv, z, focal):
    return np.array([(uv[0] - 0.5) * z / focal, (uv[1] - 0.5) * z / focal, z])


def relative_object_features(record, obj):
    """Estimated eye-to-object direction and distance, from 2D inputs only."""
    f = record.camera.focal
    eye2d = record.pose2d[[geo.LEYE, geo.REYE]].mean(axis=0)
    z_eye = subject_depth_estimate(record.pose2d, f)
    z_obj = f * OBJECT_REF_SIZE / object_scale(record, obj)
    off = _backproject(obj.center2d, z_obj, f) - _backproject(eye2d, z_eye, f)
    dist = np.linalg.norm(off)
    return list(off / max(dist, 1e-6)) + [np.log(max(dist, 1e-3))]


def normalize_pose(pose3d, scale):
    """Root-center (pelvis at origin) and divide by the dataset-level scale."""
    return geo.root_center(pose3d) / scale


def denormalize_pose(x, scale):
    return np.asarray(x, dtype=np.float64) * scale


def object_location_features(cx, cy, scale):
    """Encoding of an object's image position and apparent size.

    The size term depends on depth only (not class), so two objects that
    differ only in class share this encoding exactly.
    """
    feats = [cx - 0.5, cy - 0.5, 4.0 * scale]
    for f in _FREQS:
        feats += [np.sin(np.pi * f * cx), np.cos(np.pi * f * cx),
                  np.sin(np.pi * f * cy), np.cos(np.pi * f * cy)]
    return feats


@dataclass
class ObjectInputs:
    class_ids: np.ndarray     # (B, Qb) int64
    loc: np.ndarray           # (B, Qb, N_LOC_FEATURES)
    mask: np.ndarray          # (B, Qb) bool, True = real object


def encode_object_inputs(records, Q, pad_to_q=False):
    """Gather object class ids / location features, padded to a common length.

    Padding goes to the longest list in the batch (or to ``Q`` when
    ``pad_to_q``); padded rows are masked out and never influence the model.
    """
    counts = [len(r.objects) for r in records]
    for r, n in zip(records, counts):
        if n > Q:
            raise TooManyObjects(f"record {r.id} has {n} objects, limit is {Q}")
    width = Q if pad_to_q else max(1, max(counts, default=0))
    B = len(records)
    cls = np.zeros((B, width), dtype=np.int64)
    loc = np.zeros((B, width, N_LOC_FEATURES))
    mask = np.zeros((B, width), dtype=bool)
    for b, r in enumerate(records):
        for q, obj in enumerate(r.objects):
            cls[b, q] = obj.class_id
            loc[b, q] = (object_location_features(obj.center2d[0], obj.center2d[1], object_scale(r, obj))
                         + relative_object_features(r, obj))
            mask[b, q] = True
    return ObjectInputs(cls, loc, mask)


@dataclass
class Batch:
    pose2d: torch.Tensor          # (B, J, 2)
    maps: list                    # L tensors (B, H_l, W_l, C)
    obj_class: torch.Tensor       # (B, Qb)
    obj_loc: torch.Tensor         # (B, Qb, F)
    obj_mask: torch.Tensor        # (B, Qb)
    target: torch.Tensor | None   # (B, J, 3) normalized x0, or None

    def __len__(self):
        return self.pose2d.shape[0]

    def repeat(self, H):
        """Each sample repeated ``H`` times consecutively (sample-major)."""
        rep = lambda t: None if t is None else t.repeat_interleave(H, dim=0)
        return Batch(rep(self.pose2d), [rep(m) for m in self.maps], rep(self.obj_class),
                     rep(self.obj_loc), rep(self.obj_mask), rep(self.target))


def make_batch(records, cfg, dtype=torch.float32, with_target=True, pad_to_q=False):
    np_dtype = np.float64 if dtype == torch.float64 else np.float32
    feats = build_hierarchical_features(records, cfg, dtype=np_dtype)
    objs = encode_object_inputs(records, cfg.Q, pad_to_q=pad_to_q)
    pose2d = np.stack([r.pose2d for r in records])
    target = None
    if with_target:
        target = torch.as_tensor(np.stack([normalize_pose(r.pose3d_gt, cfg.pose_scale) for r in records]),
                                 dtype=dtype)
    return Batch(
        torch.as_tensor(pose2d, dtype=dtype),
        [torch.from_numpy(m) for m in feats.maps],
        torch.from_numpy(objs.class_ids),
        torch.as_tensor(objs.loc, dtype=dtype),
        torch.from_numpy(objs.mask),
        target,
    )


def estimate_pose_scale(records):
    """Std of root-centered coordinates over a record set (meters)."""
    P = np.stack([geo.root_center(r.pose3d_gt) for r in records])
    return float(P.std())
