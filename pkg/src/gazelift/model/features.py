"""Stand-in for a frozen image backbone.

A real pipeline would take intermediate maps of a pretrained pose network;
here each level is rendered directly from the scene: one gaussian heatmap
per body joint, one occupancy channel per object class, and three channels
carrying the head-forward direction as a blob at the head location.
"""

from dataclasses import dataclass

import numpy as np

from .. import geometry as geo
from .. import kernels

JOINT_SIGMA_PX = 1.0
HEAD_SIGMA_PX = 1.5
OBJECT_REF_SIZE = 0.3        # meters; apparent object size is focal * ref / depth


@dataclass
class HierarchicalFeatures:
    maps: list               # L arrays of shape (B, H_l, W_l, C), finest first

    @property
    def L(self):
        return len(self.maps)


def channel_layout(n_classes):
    n_body = geo.NUM_BODY_JOINTS
    return {
        "joints": (0, n_body),
        "objects": (n_body, n_body + n_classes),
        "head": (n_body + n_classes, n_body + n_classes + 3),
    }


def object_scale(record, obj):
    """Apparent size (image widths) of an object of reference size at its depth."""
    z = float(obj.center3d @ record.camera.forward)
    return record.camera.focal * OBJECT_REF_SIZE / z


def _splats(records, cfg):
    """Splat table rows ``(batch, channel, u, v, sigma_px_at_level0, amp)``."""
    lay = channel_layout(cfg.n_classes)
    rows = []
    for b, rec in enumerate(records):
        for j in range(geo.NUM_BODY_JOINTS):
            u, v = rec.pose2d[j]
            rows.append((b, j, u, v, JOINT_SIGMA_PX, 1.0))
        for obj in rec.objects:
            sig = max(JOINT_SIGMA_PX, 0.5 * object_scale(rec, obj) * cfg.grid)
            rows.append((b, lay["objects"][0] + obj.class_id, obj.center2d[0], obj.center2d[1], sig, 1.0))
        fwd = geo.frontal_direction(rec.pose3d_gt)
        u, v = rec.pose2d[geo.HEAD]
        for k in range(3):
            rows.append((b, lay["head"][0] + k, u, v, HEAD_SIGMA_PX, fwd[k]))
    return np.array(rows, dtype=np.float64).reshape(-1, 6)


def build_hierarchical_features(records, cfg, dtype=np.float32, backend=None):
    """Render the L-level pyramid for a batch of scene records.

    Joint and head blobs keep a fixed pixel width at every level; object
    blobs scale with apparent size, so they shrink in pixels as levels coarsen.
    """
    lay = channel_layout(cfg.n_classes)
    if lay["head"][1] > cfg.C:
        raise ValueError(f"need at least {lay['head'][1]} channels, got C={cfg.C}")
    table = _splats(records, cfg)
    maps = []
    for l, size in enumerate(cfg.level_sizes()):
        out = np.zeros((len(records), size, size, cfg.C), dtype=dtype)
        rows = table.copy()
        is_obj = (rows[:, 1] >= lay["objects"][0]) & (rows[:, 1] < lay["objects"][1])
        rows[is_obj, 4] = np.maximum(JOINT_SIGMA_PX, rows[is_obj, 4] / (1 << l))
        kernels.render_splats(out, rows, backend=backend)
        maps.append(out)
    return HierarchicalFeatures(maps)
