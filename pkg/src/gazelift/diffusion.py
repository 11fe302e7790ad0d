"""Noise schedules, forward corruption, deterministic DDIM sampling of several
hypotheses, and hypothesis aggregation.

Everything here is numpy; a denoiser is any callable
``denoiser(x_t, t) -> x0_pred`` on arrays of shape ``(..., J, 3)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .container import (Packer, Unpacker, decode_header, encode_header,
                        read_container, write_container)
from .errors import InvalidT, MissingGroundTruth, TimestepOrder, TimestepOutOfRange

DEFAULT_T = 1000
AGGREGATIONS = ("AVG", "ORC_P", "ORC_G", "ORC_J")


@dataclass
class DiffusionSchedule:
    T: int
    betas: np.ndarray
    alpha_bars: np.ndarray
    kind: str = "cosine"

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        self.alpha_bars = np.asarray(self.alpha_bars, dtype=np.float64)

    def alpha_bar(self, t):
        """ᾱ at ``t``; ``t = -1`` is the clean end of the chain (ᾱ = 1)."""
        return 1.0 if t < 0 else float(self.alpha_bars[t])

    def inference_timesteps(self, N):
        """N evenly strided timesteps, descending, starting at ``T - 1``."""
        if not 1 <= N <= self.T:
            raise InvalidT(f"N must be in [1, T={self.T}], got {N}")
        return [((k + 1) * self.T) // N - 1 for k in range(N)][::-1]


def make_schedule(T=DEFAULT_T, kind="cosine", beta_start=1e-4, beta_end=0.02, s=0.008):
    if T < 2:
        raise InvalidT(f"T must be >= 2, got {T}")
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    elif kind == "cosine":
        steps = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((steps + s) / (1 + s) * math.pi / 2) ** 2
        betas = np.clip(1.0 - f[1:] / f[:-1], 1e-8, 0.999)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return DiffusionSchedule(T, betas, np.cumprod(1.0 - betas), kind)


def forward_noise(x0, t, eps, sched):
    if not 0 <= t < sched.T:
        raise TimestepOutOfRange(f"t={t} outside [0, {sched.T})")
    ab = sched.alpha_bars[t]
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def ddim_step(x_t, t, t_prev, x0_pred, sched):
    """One deterministic (eta = 0) DDIM update from ``t`` to ``t_prev``."""
    if t <= t_prev:
        raise TimestepOrder(f"expected t > t_prev, got t={t}, t_prev={t_prev}")
    if t_prev < 0:
        return x0_pred
    ab_t = sched.alpha_bars[t]
    ab_prev = sched.alpha_bars[t_prev]
    eps_hat = (x_t - math.sqrt(ab_t) * x0_pred) / math.sqrt(1.0 - ab_t)
    return math.sqrt(ab_prev) * x0_pred + math.sqrt(1.0 - ab_prev) * eps_hat


@dataclass
class HypothesisSet:
    hypotheses: np.ndarray            # (H, J, 3)
    seed: int = 0
    N: int = 0
    record_id: int = -1
    aggregated: dict = field(default_factory=dict)

    @property
    def H(self):
        return self.hypotheses.shape[0]


def initial_noise(seed, H, J=geo.NUM_JOINTS):
    """Standard-normal starting skeletons, one generator per hypothesis."""
    return np.stack([np.random.default_rng([seed, h]).standard_normal((J, 3)) for h in range(H)])


def sample_hypotheses(denoiser, H=20, N=20, seeds=0, sched=None, J=geo.NUM_JOINTS):
    """Run ``N`` DDIM steps on ``H`` gaussian initializations per sample.

    ``seeds`` is one int (single sample, returns a :class:`HypothesisSet`) or a
    sequence of ints (batch; returns a list). ``denoiser`` receives the whole
    ``(B, H, J, 3)`` stack at once and must return x0 predictions of the same
    shape. Hypothesis ``h`` of sample ``i`` starts from
    ``default_rng([seeds[i], h])`` so results do not depend on batching.
    """
    if H < 1:
        raise ValueError("H must be >= 1")
    sched = sched or make_schedule()
    single = np.isscalar(seeds)
    seed_list = [int(seeds)] if single else [int(s) for s in seeds]
    x = np.stack([initial_noise(s, H, J) for s in seed_list])
    ts = sched.inference_timesteps(N)
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else -1
        x0 = np.asarray(denoiser(x, t), dtype=np.float64)
        x = ddim_step(x, t, t_prev, x0, sched)
    sets = [HypothesisSet(x[b], seed_list[b], N) for b in range(len(seed_list))]
    return sets[0] if single else sets


def _oracle_index(err):
    """Index of the smallest finite error; ties go to the lowest index."""
    err = np.where(np.isfinite(err), err, np.inf)
    return np.argmin(err, axis=-1)


def aggregate(hset, mode="AVG", gt=None):
    """Collapse hypotheses ``(..., H, J, 3)`` into one skeleton ``(..., J, 3)``.

    ``hset`` may be a :class:`HypothesisSet` or a raw array. ORC modes consult
    the ground truth ``gt`` of shape ``(..., J, 3)``.
    """
    hyp = hset.hypotheses if isinstance(hset, HypothesisSet) else np.asarray(hset, dtype=np.float64)
    if mode == "AVG":
        return hyp.mean(axis=-3)
    if mode not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {mode!r}")
    if gt is None:
        raise MissingGroundTruth(f"{mode} needs the ground-truth skeleton")
    gt = np.asarray(gt, dtype=np.float64)
    gte = gt[..., None, :, :]
    if mode == "ORC_J":
        idx = _oracle_index(np.moveaxis(geo.joint_errors(hyp, gte), -1, -2))   # (..., J)
        return np.take_along_axis(hyp, idx[..., None, :, None], axis=-3)[..., 0, :, :]
    if mode == "ORC_P":
        err = geo.mpjpe(hyp, gte)
    else:
        g_true = geo.gaze_vector_from_skeleton(gt)[..., None, :]
        err = geo.angular_error_3d(geo.gaze_vectors_or_nan(hyp), g_true)
    idx = _oracle_index(err)
    return np.take_along_axis(hyp, idx[..., None, None, None], axis=-3)[..., 0, :, :]


HYP_MAGIC = b"GZHY"
HYP_VERSION = 1


def save_hypotheses(path, hsets, meta=None):
    records = []
    for hs in hsets:
        p = Packer().i32(hs.record_id).u64(hs.seed).u32(hs.N).array(hs.hypotheses)
        records.append(p.bytes())
    write_container(path, HYP_MAGIC, HYP_VERSION, encode_header(meta or {}), records)


def load_hypotheses(path):
    _, header, payloads = read_container(path, HYP_MAGIC, {HYP_VERSION})
    out = []
    for buf in payloads:
        u = Unpacker(buf)
        rid, seed, N, hyp = u.i32(), u.u64(), u.u32(), u.array()
        u.done()
        out.append(HypothesisSet(hyp, seed, N, rid))
    return out, decode_header(header)
