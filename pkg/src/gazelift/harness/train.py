"""Training loop: uniform timestep, forward corruption, x0 regression with MSE."""

import dataclasses
import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import torch

from ..diffusion import make_schedule
from ..errors import NonFiniteLoss
from ..model import GazePoseDenoiser, ModelConfig, estimate_pose_scale, make_batch
from ..scenes import _coerce

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 20
    lr: float = 6e-4
    lr_decay: float = 0.993      # multiplicative, applied once per epoch
    T: int = 1000
    H: int = 20
    N: int = 20
    seed: int = 0
    max_steps: int = 0           # 0 = no cap; used for quick overfit runs

    def __post_init__(self):
        for name in ("batch_size", "epochs", "T", "H", "N"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lr <= 0 or self.lr_decay <= 0:
            raise ValueError("lr and lr_decay must be positive")
        if self.N > self.T:
            raise ValueError("N must not exceed T")

    def lr_at(self, epoch):
        return self.lr * self.lr_decay ** epoch

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        return cls(**{k: _coerce(types[k], v) for k, v in mapping.items() if k in types})


@dataclass
class TrainResult:
    model: GazePoseDenoiser
    losses: list                 # per step
    epoch_losses: list
    seconds: float


def _noisy_inputs(target, sched, rng, gen, use_diffusion):
    B = target.shape[0]
    if not use_diffusion:
        return torch.zeros_like(target), torch.zeros(B, dtype=torch.long)
    t = torch.from_numpy(rng.integers(0, sched.T, size=B))
    eps = torch.randn(target.shape, generator=gen, dtype=target.dtype)
    ab = torch.as_tensor(sched.alpha_bars, dtype=target.dtype)[t][:, None, None]
    return ab.sqrt() * target + (1 - ab).sqrt() * eps, t


def train(records, cfg=None, model_cfg=None, model=None, dtype=torch.float32, progress=None):
    """Fit a denoiser on ``records``.

    ``progress`` is an optional callable receiving ``(epoch, mean_loss)``.
    Raises :class:`NonFiniteLoss` as soon as a batch loss is NaN/inf.
    """
    if not records:
        raise ValueError("empty training set")
    cfg = cfg or TrainConfig()
    model_cfg = model_cfg or ModelConfig()
    if model_cfg.pose_scale == 1.0:
        model_cfg = dataclasses.replace(model_cfg, pose_scale=estimate_pose_scale(records))
    model_cfg = dataclasses.replace(model_cfg, T=cfg.T)
    torch.manual_seed(cfg.seed)
    if model is None:
        model = GazePoseDenoiser(model_cfg)
    model.to(dtype).train()
    sched = make_schedule(cfg.T, model_cfg.schedule)
    rng = np.random.default_rng([cfg.seed, 1])
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    lr_sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda e: cfg.lr_decay ** e)

    losses, epoch_losses = [], []
    start = time.time()
    step = 0
    n = len(records)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        ep = []
        for i in range(0, n, cfg.batch_size):
            chunk = [records[k] for k in order[i:i + cfg.batch_size]]
            batch = make_batch(chunk, model.cfg, dtype=dtype)
            x_t, t = _noisy_inputs(batch.target, sched, rng, gen, model.cfg.use_diffusion)
            pred = model(batch, x_t, t)
            loss = torch.mean((pred - batch.target) ** 2)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss.item()} at epoch {epoch}, step {step}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            loss = loss.detach()
            losses.append(loss.item())
            ep.append(losses[-1])
            step += 1
            if cfg.max_steps and step >= cfg.max_steps:
                break
        epoch_losses.append(float(np.mean(ep)))
        log.info("epoch %d  loss %.5f  lr %.2e", epoch, epoch_losses[-1], opt.param_groups[0]["lr"])
        if progress:
            progress(epoch, epoch_losses[-1])
        lr_sched.step()
        if cfg.max_steps and step >= cfg.max_steps:
            break
    model.eval()
    return TrainResult(model, losses, epoch_losses, time.time() - start)


def overfit_one_sample(record, steps=200, model_cfg=None, seed=0, lr=5e-3):
    """Repeatedly fit a single record; returns the per-step loss curve.

    The step size is larger than the training default so a tiny model can
    memorize the sample within a couple of hundred steps.
    """
    cfg = TrainConfig(batch_size=1, epochs=steps, lr=lr, lr_decay=1.0, seed=seed, max_steps=steps)
    mc = model_cfg or ModelConfig(d=16, L=2, grid=16, C=32, heads=2, dce_heads=2, K=2)
    if mc.pose_scale == 1.0:
        mc = dataclasses.replace(mc, pose_scale=0.3)
    return train([record], cfg, mc).losses


def loss_reduction(losses, window=10):
    first = losses[0]
    last = float(np.mean(losses[-window:]))
    return first / last if last > 0 else math.inf
