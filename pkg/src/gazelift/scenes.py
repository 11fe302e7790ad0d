"""Procedural scenes in which the true gaze depends on head pose and objects.

A record holds one subject seen by one camera, a handful of objects, and the
ground truth gaze. All geometry inside a record is in camera coordinates
(x right, y down, z forward). Generation is a pure function of
``(n, seed, config)``; record ``i`` draws from ``default_rng([seed, i])`` so it
can be produced independently of the others.
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from .container import (Packer, Unpacker, decode_header, encode_header,
                        read_container, write_container)
from .errors import CorruptFile

MAGIC = b"GZSC"
VERSION = 1

CLASS_NAMES = ("monitor", "book", "cup", "phone", "plant", "tv", "ball", "person")
NUM_CLASSES = len(CLASS_NAMES)

# scene tag -> (class ids, class probabilities, (min objects, max objects))
SCENE_TAGS = {
    "office": ((0, 1, 2, 3, 4), (0.35, 0.2, 0.2, 0.15, 0.1), (2, 4)),
    "living_room": ((5, 1, 2, 3, 4, 7), (0.3, 0.15, 0.15, 0.15, 0.1, 0.15), (2, 4)),
    "kitchen": ((2, 3, 4, 1), (0.4, 0.2, 0.2, 0.2), (1, 3)),
    "library": ((1, 0, 7), (0.6, 0.2, 0.2), (2, 4)),
    "courtyard": ((6, 7, 4), (0.4, 0.4, 0.2), (1, 3)),
}
TAG_NAMES = tuple(SCENE_TAGS)


@dataclass
class SceneConfig:
    """Generator settings; serialized as a flat ``key=value`` text file."""

    gaze_distance: float = geo.DEFAULT_GAZE_DISTANCE
    p_object: float = 0.7
    cone_deg: float = 100.0          # full aperture around head-forward
    gaze_noise_deg: float = 10.0
    eye_lateral: float = 0.03
    eye_forward: float = 0.08
    focal: float = 1.2
    camera_distance_min: float = 3.0
    camera_distance_max: float = 5.0
    camera_azimuth_max_deg: float = 100.0
    camera_elevation_min_deg: float = -5.0
    camera_elevation_max_deg: float = 25.0
    frame_margin: float = 0.05
    object_depth_min: float = 1.0
    object_depth_max: float = 8.0
    attended_distance_min: float = 0.7
    attended_distance_max: float = 2.5
    guarantee_eligible: bool = True
    max_objects: int = 30
    train_frac: float = 0.8
    val_frac: float = 0.1

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in dataclasses.asdict(self).items())

    @classmethod
    def from_mapping(cls, mapping):
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for k, v in mapping.items():
            if k not in types:
                raise KeyError(f"unknown scene config key {k!r}")
            kwargs[k] = _coerce(types[k], v)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text):
        return cls.from_mapping(parse_key_values(text))

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.to_text())


def parse_key_values(text):
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        k, sep, v = line.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {line!r}")
        out[k.strip()] = v.strip()
    return out


def _coerce(tp, v):
    if not isinstance(v, str):
        return v
    name = tp if isinstance(tp, str) else tp.__name__
    if name == "bool":
        return v.lower() in ("1", "true", "yes", "on")
    if name == "int":
        return int(v)
    if name == "float":
        return float(v)
    return v


@dataclass
class PosePrior:
    """Bone lengths (m) and joint-angle ranges (deg) of the stick figure."""

    hip_width: float = 0.12
    thigh: float = 0.44
    shin: float = 0.43
    spine: float = 0.50
    neck: float = 0.20
    shoulder_width: float = 0.18
    upper_arm: float = 0.28
    forearm: float = 0.25
    eye_lateral: float = 0.03
    eye_forward: float = 0.08
    ranges: dict = field(default_factory=lambda: {
        "yaw": (-180.0, 180.0),
        "lean": (-10.0, 30.0),
        "roll": (-10.0, 10.0),
        "l_hip_flex": (-20.0, 70.0), "r_hip_flex": (-20.0, 70.0),
        "l_hip_abd": (-5.0, 25.0), "r_hip_abd": (-5.0, 25.0),
        "l_knee": (0.0, 90.0), "r_knee": (0.0, 90.0),
        "l_sh_flex": (-40.0, 130.0), "r_sh_flex": (-40.0, 130.0),
        "l_sh_abd": (0.0, 80.0), "r_sh_abd": (0.0, 80.0),
        "l_elbow": (0.0, 130.0), "r_elbow": (0.0, 130.0),
        "head_yaw": (-60.0, 60.0),
        "head_pitch": (-35.0, 30.0),
        "head_roll": (-15.0, 15.0),
    })

    def bone_table(self):
        """Expected length of every bone in :data:`geometry.BONES` order."""
        eye = float(np.hypot(self.eye_lateral, self.eye_forward))
        return np.array([
            self.hip_width, self.thigh, self.shin, self.hip_width, self.thigh, self.shin,
            self.spine, self.neck, eye, eye,
            self.shoulder_width, self.upper_arm, self.forearm,
            self.shoulder_width, self.upper_arm, self.forearm,
        ])


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


_DOWN = np.array([0.0, -1.0, 0.0])


@dataclass
class BodySample:
    joints: np.ndarray        # (17, 3), world frame: x = subject left at yaw 0, y up, z forward
    angles: dict              # degrees
    head_forward: np.ndarray
    head_up: np.ndarray
    head_left: np.ndarray


def sample_pose_prior(rng, prior=None):
    """Draw a 17-joint stick figure with the pelvis at the origin."""
    prior = prior or PosePrior()
    ang = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in prior.ranges.items()}
    r = {k: np.radians(v) for k, v in ang.items()}

    R_pelvis = _ry(r["yaw"])
    R_torso = R_pelvis @ _rx(-r["lean"]) @ _rz(r["roll"])
    J = np.zeros((geo.NUM_BODY_JOINTS, 3))
    J[geo.PELVIS] = 0.0

    for side, sign, hip, knee, ankle in (("l", 1.0, 4, 5, 6), ("r", -1.0, 1, 2, 3)):
        J[hip] = R_pelvis @ np.array([sign * prior.hip_width, 0.0, 0.0])
        R_thigh = R_pelvis @ _rz(sign * r[f"{side}_hip_abd"]) @ _rx(-r[f"{side}_hip_flex"])
        J[knee] = J[hip] + prior.thigh * (R_thigh @ _DOWN)
        J[ankle] = J[knee] + prior.shin * (R_thigh @ _rx(r[f"{side}_knee"]) @ _DOWN)

    J[geo.NECK] = R_torso @ np.array([0.0, prior.spine, 0.0])
    for side, sign, sh, el, wr in (("l", 1.0, 11, 12, 13), ("r", -1.0, 14, 15, 16)):
        J[sh] = J[geo.NECK] + R_torso @ np.array([sign * prior.shoulder_width, 0.0, 0.0])
        R_upper = R_torso @ _rz(sign * r[f"{side}_sh_abd"]) @ _rx(-r[f"{side}_sh_flex"])
        J[el] = J[sh] + prior.upper_arm * (R_upper @ _DOWN)
        J[wr] = J[el] + prior.forearm * (R_upper @ _rx(-r[f"{side}_elbow"]) @ _DOWN)

    R_head = R_torso @ _ry(r["head_yaw"]) @ _rx(-r["head_pitch"]) @ _rz(r["head_roll"])
    J[geo.HEAD] = J[geo.NECK] + R_head @ np.array([0.0, prior.neck, 0.0])
    J[geo.LEYE] = J[geo.HEAD] + R_head @ np.array([prior.eye_lateral, 0.0, prior.eye_forward])
    J[geo.REYE] = J[geo.HEAD] + R_head @ np.array([-prior.eye_lateral, 0.0, prior.eye_forward])
    return BodySample(J, ang, R_head[:, 2].copy(), R_head[:, 1].copy(), R_head[:, 0].copy())


@dataclass
class SceneObject:
    class_id: int
    center2d: np.ndarray
    center3d: np.ndarray


@dataclass
class SceneRecord:
    id: int
    tag: str
    camera: geo.CameraModel
    pose3d_gt: np.ndarray       # (J, 3) meters, camera frame, gaze joint last
    pose2d: np.ndarray          # (J, 2) normalized image coords, gaze row = eye midpoint
    objects: list
    gaze_gt: np.ndarray
    attended_object: int | None = None

    @property
    def object_driven(self):
        return self.attended_object is not None


def _tangent_basis(v):
    a = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(v, a)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(v, t1)


def perturb_direction(v, sigma_rad, rng):
    """Rotate unit ``v`` by an isotropic gaussian tangent offset (``sigma_rad`` per axis)."""
    t1, t2 = _tangent_basis(v)
    a, b = rng.normal(0.0, sigma_rad, size=2)
    theta = np.hypot(a, b)
    if theta == 0.0:
        return v.copy()
    axis_dir = (a * t1 + b * t2) / theta
    out = np.cos(theta) * v + np.sin(theta) * axis_dir
    return out / np.linalg.norm(out)


def sample_gaze(head_forward, eye_mid, objects, rng, p_object=0.7, cone_deg=100.0, noise_deg=10.0):
    """Draw ``(gaze, attended_index_or_None)`` for one subject.

    With probability ``p_object`` the subject looks exactly at one object
    drawn uniformly among those inside the cone around ``head_forward``;
    otherwise, or if no object is eligible, the gaze is the head-forward
    direction with gaussian angular noise.
    """
    head_forward = np.asarray(head_forward, dtype=np.float64)
    cos_half = np.cos(np.radians(cone_deg / 2.0))
    eligible = []
    dirs = []
    for i, obj in enumerate(objects):
        d = np.asarray(obj.center3d, dtype=np.float64) - eye_mid
        d = d / np.linalg.norm(d)
        dirs.append(d)
        if d @ head_forward >= cos_half:
            eligible.append(i)
    attend = rng.random() < p_object
    if attend and eligible:
        k = eligible[int(rng.integers(len(eligible)))]
        return dirs[k], k
    return perturb_direction(head_forward, np.radians(noise_deg), rng), None


def _look_at(cam_pos, target):
    fwd = target - cam_pos
    fwd /= np.linalg.norm(fwd)
    down = np.array([0.0, -1.0, 0.0])
    down = down - (down @ fwd) * fwd
    down /= np.linalg.norm(down)
    right = np.cross(down, fwd)
    return np.stack([right, down, fwd])


def _in_frame(uv, margin):
    return bool(np.all(uv >= margin) and np.all(uv <= 1.0 - margin))


def _place_objects(rng, tag, eye_mid, head_fwd, cfg, camera):
    classes, probs, (lo, hi) = SCENE_TAGS[tag]
    n = min(int(rng.integers(lo, hi + 1)), cfg.max_objects)
    objs = []
    cos_half = np.cos(np.radians(cfg.cone_deg / 2.0))
    if cfg.guarantee_eligible and n > 0:
        for _ in range(64):
            c = rng.uniform(cos_half, 1.0)
            phi = rng.uniform(0.0, 2 * np.pi)
            t1, t2 = _tangent_basis(head_fwd)
            s = np.sqrt(1.0 - c * c)
            d = c * head_fwd + s * (np.cos(phi) * t1 + np.sin(phi) * t2)
            p = eye_mid + rng.uniform(cfg.attended_distance_min, cfg.attended_distance_max) * d
            if p[2] > 0.5:
                uv = camera.project(p)
                if _in_frame(uv, cfg.frame_margin):
                    cls = int(rng.choice(classes, p=probs))
                    objs.append(SceneObject(cls, uv, p))
                    break
    while len(objs) < n:
        uv = rng.uniform(cfg.frame_margin, 1.0 - cfg.frame_margin, size=2)
        z = rng.uniform(cfg.object_depth_min, cfg.object_depth_max)
        xy = (uv - camera.principal) * z / camera.focal
        p = np.array([xy[0], xy[1], z])
        if np.linalg.norm(p - eye_mid) < 0.4:
            continue
        cls = int(rng.choice(classes, p=probs))
        objs.append(SceneObject(cls, camera.project(p), p))
    return objs


def generate_record(index, seed, cfg=None, prior=None):
    cfg = cfg or SceneConfig()
    prior = prior or PosePrior(eye_lateral=cfg.eye_lateral, eye_forward=cfg.eye_forward)
    rng = np.random.default_rng([seed, index])
    tag = TAG_NAMES[int(rng.integers(len(TAG_NAMES)))]
    body = sample_pose_prior(rng, prior)

    facing = np.radians(body.angles["yaw"])
    az = facing + np.radians(rng.uniform(-cfg.camera_azimuth_max_deg, cfg.camera_azimuth_max_deg))
    el = np.radians(rng.uniform(cfg.camera_elevation_min_deg, cfg.camera_elevation_max_deg))
    dist = rng.uniform(cfg.camera_distance_min, cfg.camera_distance_max)
    target = body.joints[geo.NECK] * 0.5 + rng.normal(0.0, 0.05, size=3)
    camera = geo.CameraModel(focal=cfg.focal)
    for _ in range(40):
        offset = np.array([np.sin(az) * np.cos(el), np.sin(el), np.cos(az) * np.cos(el)])
        cam_pos = target + dist * offset
        R = _look_at(cam_pos, target)
        joints_cam = (body.joints - cam_pos) @ R.T
        if np.all(joints_cam[:, 2] > 0.1) and _in_frame(camera.project(joints_cam), cfg.frame_margin):
            break
        dist *= 1.1
    head_fwd = R @ body.head_forward
    eye_mid = 0.5 * (joints_cam[geo.LEYE] + joints_cam[geo.REYE])

    objects = _place_objects(rng, tag, eye_mid, head_fwd, cfg, camera)
    gaze, attended = sample_gaze(head_fwd, eye_mid, objects, rng, cfg.p_object, cfg.cone_deg,
                                 cfg.gaze_noise_deg)
    gaze_joint = geo.gaze_joint_from_direction(joints_cam[geo.LEYE], joints_cam[geo.REYE], gaze,
                                               cfg.gaze_distance)
    pose3d = np.vstack([joints_cam, gaze_joint])
    pose2d = geo.init_2d_gaze_joint(camera.project(joints_cam))
    return SceneRecord(index, tag, camera, pose3d, pose2d, objects, gaze, attended)


def validate_record(rec, gaze_distance=geo.DEFAULT_GAZE_DISTANCE, tol=1e-6):
    """Return a list of violated invariants (empty when the record is valid)."""
    bad = []
    J = geo.NUM_JOINTS
    if rec.pose3d_gt.shape != (J, 3) or rec.pose2d.shape != (J, 2):
        return [f"record {rec.id}: bad pose shapes"]
    if not (np.all(np.isfinite(rec.pose3d_gt)) and np.all(np.isfinite(rec.pose2d))):
        bad.append(f"record {rec.id}: non-finite coordinates")
    if not rec.camera.is_orthonormal():
        bad.append(f"record {rec.id}: camera basis not orthonormal")
    proj = rec.camera.project(rec.pose3d_gt[:geo.GAZE])
    if np.max(np.abs(proj - rec.pose2d[:geo.GAZE])) > tol:
        bad.append(f"record {rec.id}: pose2d is not the projection of pose3d")
    mid2d = 0.5 * (rec.pose2d[geo.LEYE] + rec.pose2d[geo.REYE])
    if np.max(np.abs(rec.pose2d[geo.GAZE] - mid2d)) > tol:
        bad.append(f"record {rec.id}: 2D gaze row is not the eye midpoint")
    if abs(np.linalg.norm(rec.gaze_gt) - 1.0) > tol:
        bad.append(f"record {rec.id}: gaze not unit norm")
    expected = geo.gaze_joint_from_direction(rec.pose3d_gt[geo.LEYE], rec.pose3d_gt[geo.REYE],
                                             rec.gaze_gt, gaze_distance)
    if np.max(np.abs(expected - rec.pose3d_gt[geo.GAZE])) > tol:
        bad.append(f"record {rec.id}: gaze joint inconsistent with gaze direction")
    if rec.attended_object is not None:
        if not 0 <= rec.attended_object < len(rec.objects):
            bad.append(f"record {rec.id}: attended object index out of range")
        else:
            d = rec.objects[rec.attended_object].center3d - geo.eye_midpoint(rec.pose3d_gt)
            if np.max(np.abs(d / np.linalg.norm(d) - rec.gaze_gt)) > tol:
                bad.append(f"record {rec.id}: gaze does not point at the attended object")
    return bad


def encode_record(rec):
    p = Packer()
    p.u64(rec.id).string(rec.tag).array(rec.camera.to_array())
    p.array(rec.pose3d_gt).array(rec.pose2d).array(rec.gaze_gt)
    p.i32(-1 if rec.attended_object is None else rec.attended_object)
    p.u16(len(rec.objects))
    for o in rec.objects:
        p.u16(o.class_id).array(o.center2d).array(o.center3d)
    return p.bytes()


def decode_record(buf):
    u = Unpacker(buf)
    rid = u.u64()
    tag = u.string()
    camera = geo.CameraModel.from_array(u.array())
    pose3d = u.array()
    pose2d = u.array()
    gaze = u.array()
    att = u.i32()
    objs = [SceneObject(u.u16(), u.array(), u.array()) for _ in range(u.u16())]
    u.done()
    return SceneRecord(rid, tag, camera, pose3d, pose2d, objs, gaze, None if att < 0 else att)


def split_ids(n, seed, cfg):
    perm = np.random.default_rng([seed, 0x5EED]).permutation(n)
    n_train = int(round(cfg.train_frac * n))
    n_val = int(round(cfg.val_frac * n))
    if n_train + n_val > n:
        n_val = n - n_train
    return {
        "train": sorted(perm[:n_train].tolist()),
        "val": sorted(perm[n_train:n_train + n_val].tolist()),
        "test": sorted(perm[n_train + n_val:].tolist()),
    }


def manifest_path(path, split):
    path = Path(path)
    return path.with_name(f"{path.stem}.{split}.txt")


def generate_dataset(n, seed, config=None, path=None):
    """Generate ``n`` records; when ``path`` is given write the container and
    the train/val/test manifests next to it. Returns the records."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = config or SceneConfig()
    records = [generate_record(i, seed, cfg) for i in range(n)]
    if path is not None:
        save_dataset(path, records, cfg, seed)
        for split, ids in split_ids(n, seed, cfg).items():
            manifest_path(path, split).write_text("".join(f"{i}\n" for i in ids))
    return records


def save_dataset(path, records, cfg, seed=0):
    header = encode_header({"seed": seed, "n": len(records)}) + cfg.to_text().encode("utf-8")
    write_container(path, MAGIC, VERSION, header, (encode_record(r) for r in records))


def read_dataset_header(path):
    _, header, _ = read_container(path, MAGIC, {VERSION})
    return decode_header(header)


def load_dataset(path, validate=True):
    _, header, payloads = read_container(path, MAGIC, {VERSION})
    meta = decode_header(header)
    cfg_keys = {f.name for f in dataclasses.fields(SceneConfig)}
    cfg = SceneConfig.from_mapping({k: v for k, v in meta.items() if k in cfg_keys})
    records = [decode_record(p) for p in payloads]
    if validate:
        for rec in records:
            bad = validate_record(rec, cfg.gaze_distance)
            if bad:
                raise CorruptFile("; ".join(bad))
    return records


def load_config_from_dataset(path):
    meta = read_dataset_header(path)
    cfg_keys = {f.name for f in dataclasses.fields(SceneConfig)}
    return SceneConfig.from_mapping({k: v for k, v in meta.items() if k in cfg_keys})


def load_split(path, split, records=None):
    """Return the ids listed in a split manifest, or the matching records."""
    ids = [int(line) for line in manifest_path(path, split).read_text().split()]
    if records is None:
        return ids
    by_id = {r.id: r for r in records}
    return [by_id[i] for i in ids]
