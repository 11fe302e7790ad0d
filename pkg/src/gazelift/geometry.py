"""Skeleton layout, camera model and the gaze / pose metrics.

Poses are ``(..., J, 3)`` arrays in meters in camera coordinates; the gaze
joint is always the last row. The 17 body joints keep the Human3.6M order
except for the torso/head block (7-10), which carries Neck, Head and the two
synthesized eye joints instead of Spine, Thorax, Nose and HeadTop.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateGaze, DegenerateProjection, InvalidDistance,
                     MissingEyes, ShapeMismatch)

JOINT_NAMES = (
    "Pelvis", "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle",
    "Neck", "Head", "LEye", "REye",
    "LShoulder", "LElbow", "LWrist", "RShoulder", "RElbow", "RWrist",
    "Gaze",
)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}
NUM_JOINTS = len(JOINT_NAMES)
NUM_BODY_JOINTS = NUM_JOINTS - 1

PELVIS = JOINT_INDEX["Pelvis"]
NECK = JOINT_INDEX["Neck"]
HEAD = JOINT_INDEX["Head"]
LEYE = JOINT_INDEX["LEye"]
REYE = JOINT_INDEX["REye"]
GAZE = JOINT_INDEX["Gaze"]

# (parent, child) pairs of the stick figure, used for bone lengths and plots.
BONES = (
    (0, 1), (1, 2), (2, 3), (0, 4), (4, 5), (5, 6),
    (0, 7), (7, 8), (8, 9), (8, 10),
    (7, 11), (11, 12), (12, 13), (7, 14), (14, 15), (15, 16),
)

DEFAULT_GAZE_DISTANCE = 0.30
_EPS = 1e-9


@dataclass
class CameraModel:
    """Pinhole camera expressed in the frame the poses live in.

    ``right``/``down``/``forward`` form an orthonormal basis; image coordinates
    are normalized to [0, 1] with ``focal`` measured in image widths.
    """

    right: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    down: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    forward: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    focal: float = 1.2
    principal: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))

    def __post_init__(self):
        self.right = np.asarray(self.right, dtype=np.float64)
        self.down = np.asarray(self.down, dtype=np.float64)
        self.forward = np.asarray(self.forward, dtype=np.float64)
        self.principal = np.asarray(self.principal, dtype=np.float64)
        self.focal = float(self.focal)

    @property
    def basis(self):
        return np.stack([self.right, self.down, self.forward])

    def is_orthonormal(self, tol=1e-9):
        R = self.basis
        return bool(np.allclose(R @ R.T, np.eye(3), atol=tol))

    def project(self, points):
        """Perspective projection of ``(..., 3)`` points to normalized image coords."""
        p = np.asarray(points, dtype=np.float64) @ self.basis.T
        return self.focal * p[..., :2] / p[..., 2:3] + self.principal

    def image_plane(self, vectors):
        """In-plane components of ``(..., 3)`` direction vectors."""
        v = np.asarray(vectors, dtype=np.float64)
        return np.stack([v @ self.right, v @ self.down], axis=-1)

    def to_array(self):
        return np.concatenate([self.right, self.down, self.forward, [self.focal], self.principal])

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=np.float64)
        return cls(a[0:3], a[3:6], a[6:9], float(a[9]), a[10:12])


def eye_midpoint(pose):
    pose = np.asarray(pose, dtype=np.float64)
    return 0.5 * (pose[..., LEYE, :] + pose[..., REYE, :])


def gaze_vector_from_skeleton(pose):
    """Unit gaze direction from the eye midpoint towards the gaze joint.

    Works on a single ``(J, 3)`` pose or any stack ``(..., J, 3)``.
    """
    pose = np.asarray(pose, dtype=np.float64)
    diff = pose[..., GAZE, :] - eye_midpoint(pose)
    n = np.linalg.norm(diff, axis=-1, keepdims=True)
    if np.any(n <= _EPS):
        raise DegenerateGaze("gaze joint coincides with the eye midpoint")
    return diff / n


def gaze_vectors_or_nan(pose):
    """Batch variant of :func:`gaze_vector_from_skeleton` that yields NaN rows
    instead of raising on degenerate skeletons."""
    pose = np.asarray(pose, dtype=np.float64)
    diff = pose[..., GAZE, :] - eye_midpoint(pose)
    n = np.linalg.norm(diff, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = diff / n
    return np.where(n > _EPS, v, np.nan)


def gaze_joint_from_direction(eye_l, eye_r, direction, dist=DEFAULT_GAZE_DISTANCE):
    """Place the gaze joint ``dist`` meters from the eye midpoint along ``direction``."""
    if not dist > 0:
        raise InvalidDistance(f"gaze-joint distance must be positive, got {dist}")
    mid = 0.5 * (np.asarray(eye_l, dtype=np.float64) + np.asarray(eye_r, dtype=np.float64))
    return mid + dist * np.asarray(direction, dtype=np.float64)


def init_2d_gaze_joint(pose2d_body):
    """Append the 2D gaze row (eye midpoint) to a ``(J-1, 2)`` body pose."""
    body = np.asarray(pose2d_body, dtype=np.float64)
    eyes = body[..., [LEYE, REYE], :]
    if not np.all(np.isfinite(eyes)):
        raise MissingEyes("eye keypoints must be finite")
    gaze = eyes.mean(axis=-2, keepdims=True)
    return np.concatenate([body, gaze], axis=-2)


def angular_error_3d(pred, gt):
    """Angle in degrees between unit vectors (broadcasts over leading axes)."""
    dot = np.sum(np.asarray(pred, dtype=np.float64) * np.asarray(gt, dtype=np.float64), axis=-1)
    return np.degrees(np.arccos(np.clip(dot, -1.0, 1.0)))


def _planar(v, camera):
    p = camera.image_plane(v)
    n = np.linalg.norm(p, axis=-1, keepdims=True)
    return p, n


def angular_error_2d(pred, gt, camera):
    """Angle in degrees between the image-plane projections of two directions.

    The camera-axis component is dropped and the remaining 2-vector
    renormalized; a direction along the camera axis has no planar angle.
    """
    p, pn = _planar(pred, camera)
    g, gn = _planar(gt, camera)
    if np.any(pn < _EPS) or np.any(gn < _EPS):
        raise DegenerateProjection("gaze direction is parallel to the camera axis")
    dot = np.sum((p / pn) * (g / gn), axis=-1)
    return np.degrees(np.arccos(np.clip(dot, -1.0, 1.0)))


def angular_error_2d_or_nan(pred, gt, camera):
    p, pn = _planar(pred, camera)
    g, gn = _planar(gt, camera)
    with np.errstate(invalid="ignore", divide="ignore"):
        dot = np.sum((p / pn) * (g / gn), axis=-1)
        err = np.degrees(np.arccos(np.clip(dot, -1.0, 1.0)))
    ok = (pn[..., 0] >= _EPS) & (gn[..., 0] >= _EPS)
    return np.where(ok, err, np.nan)


def joint_errors(pred, gt):
    """Per-joint Euclidean distance in meters, shape ``(..., J)``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape[-2:] != gt.shape[-2:]:
        raise ShapeMismatch(f"pose shapes differ: {pred.shape} vs {gt.shape}")
    return np.linalg.norm(pred - gt, axis=-1)


def mpjpe(pred, gt, include_gaze=False):
    """Mean per-joint position error in millimeters.

    The gaze joint is left out unless ``include_gaze`` is set, so the number
    is comparable with body-only pose benchmarks.
    """
    err = joint_errors(pred, gt)
    if not include_gaze:
        err = err[..., :GAZE]
    return 1000.0 * err.mean(axis=-1)


def root_center(pose):
    pose = np.asarray(pose, dtype=np.float64)
    return pose - pose[..., PELVIS:PELVIS + 1, :]


def bone_lengths(pose):
    pose = np.asarray(pose, dtype=np.float64)
    idx = np.array(BONES)
    return np.linalg.norm(pose[..., idx[:, 1], :] - pose[..., idx[:, 0], :], axis=-1)


def frontal_direction(pose):
    """Unit vector orthogonal to the inter-eye axis pointing out of the face.

    The face side comes from the eye midpoint's offset in front of the head
    joint; when the eyes sit exactly beside the head joint the neck->head axis
    is used instead (forward = left x up).
    """
    from .errors import DegenerateEyes

    pose = np.asarray(pose, dtype=np.float64)
    axis = pose[..., LEYE, :] - pose[..., REYE, :]
    n = np.linalg.norm(axis, axis=-1, keepdims=True)
    if np.any(n < _EPS):
        raise DegenerateEyes("eye joints coincide")
    e = axis / n
    f = eye_midpoint(pose) - pose[..., HEAD, :]
    f = f - np.sum(f * e, axis=-1, keepdims=True) * e
    fn = np.linalg.norm(f, axis=-1, keepdims=True)
    up = pose[..., HEAD, :] - pose[..., NECK, :]
    alt = np.cross(e, up)
    alt = alt / np.linalg.norm(alt, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(fn > 1e-6, f / fn, alt)
    return out
