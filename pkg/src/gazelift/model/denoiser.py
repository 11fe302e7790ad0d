"""The conditional denoiser and its checkpoint format.

Stage shapes for one forward pass (batch dimension omitted)::

    F_p'  (L+1, J, d)   deformable_context_extract
    F_p   (L+2, J, d)   assemble_fp
          (L+2, J, d)   pose_to_context_attention
    BS_p  (J, d')       joint_to_joint_attention, d' = d (L+2)
    PG    (J, d')       object_to_context
    x0    (J, 3)        regression_head

BS_p and PG are stored joint-major, i.e. the transpose of a d' x J matrix.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..container import Packer, Unpacker, decode_header, encode_header, read_container, write_container
from ..errors import ShapeMismatch
from .batch import N_LOC_FEATURES
from .config import ModelConfig
from .dce import DeformableContextExtraction
from .layers import CrossAttentionBlock, TransformerBlock, timestep_encoding


@dataclass
class ObjectDescriptors:
    queries: torch.Tensor    # (B, Qb, d')
    mask: torch.Tensor       # (B, Qb) bool


@dataclass
class Condition:
    fp_prime: torch.Tensor
    objects: ObjectDescriptors

    def repeat(self, H):
        rep = lambda t: t.repeat_interleave(H, dim=0)
        return Condition(rep(self.fp_prime), ObjectDescriptors(rep(self.objects.queries),
                                                               rep(self.objects.mask)))


class GazePoseDenoiser(nn.Module):
    def __init__(self, cfg=None):
        super().__init__()
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        d, dj = cfg.d, cfg.d_joint
        self.dce = DeformableContextExtraction(cfg)
        self.noisy_proj = nn.Linear(3, d)
        self.p2c = TransformerBlock(d, cfg.heads, cfg.ffn_mult)
        self.j2j = TransformerBlock(dj, cfg.heads, cfg.ffn_mult)
        self.class_embed = nn.Embedding(cfg.n_classes, dj)
        self.loc_proj = nn.Linear(N_LOC_FEATURES, dj)
        self.o2c = CrossAttentionBlock(dj, cfg.heads, cfg.ffn_mult)
        self.merge = nn.Linear(dj, dj, bias=False)
        self.head_norm = nn.LayerNorm(dj)
        self.head = nn.Sequential(
            nn.Linear(dj, dj), nn.GELU(),
            nn.Linear(dj, dj), nn.GELU(),
            nn.Linear(dj, 3),
        )

    # -- stages -----------------------------------------------------------
    def deformable_context_extract(self, maps, pose2d):
        return self.dce(maps, pose2d)

    def _timesteps(self, t, B, device):
        t = torch.as_tensor(t, device=device).reshape(-1)
        return t.expand(B) if t.numel() == 1 else t

    def assemble_fp(self, fp_prime, noisy_pose, t):
        cfg = self.cfg
        B = fp_prime.shape[0]
        if fp_prime.shape[1:] != (cfg.L + 1, cfg.J, cfg.d):
            raise ShapeMismatch(f"F_p' has shape {tuple(fp_prime.shape)}")
        if noisy_pose.shape != (B, cfg.J, 3):
            raise ShapeMismatch(f"noisy pose has shape {tuple(noisy_pose.shape)}")
        if not cfg.use_diffusion:
            tok = torch.zeros_like(fp_prime[:, :1])
            return torch.cat([fp_prime, tok], dim=1)
        tok = self.noisy_proj(noisy_pose)[:, None]
        fp = torch.cat([fp_prime, tok], dim=1)
        enc = timestep_encoding(self._timesteps(t, B, fp.device), cfg.d).to(fp.dtype)
        return fp + enc[:, None, None, :]

    def pose_to_context_attention(self, fp):
        B, S, J, d = fp.shape
        x = fp.permute(0, 2, 1, 3).reshape(B * J, S, d)
        x = self.p2c(x)
        return x.view(B, J, S, d).permute(0, 2, 1, 3)

    def joint_to_joint_attention(self, fp_mixed):
        B, S, J, d = fp_mixed.shape
        tokens = fp_mixed.permute(0, 2, 1, 3).reshape(B, J, S * d)
        return self.j2j(tokens)

    def encode_objects(self, obj_class, obj_loc, obj_mask):
        q = self.class_embed(obj_class) + self.loc_proj(obj_loc)
        q = q * obj_mask[..., None].to(q.dtype)
        return ObjectDescriptors(q, obj_mask)

    def object_to_context(self, objs, bsp):
        if not self.cfg.use_objects:
            return bsp
        out = self.o2c(objs.queries, bsp)
        m = objs.mask[..., None].to(out.dtype)
        co = (out * m).sum(dim=1) / m.sum(dim=1).clamp(min=1.0)
        gaze = bsp[:, -1:] + self.merge(co)[:, None]
        return torch.cat([bsp[:, :-1], gaze], dim=1)

    def regression_head(self, pg, t):
        h = self.head_norm(pg)
        if self.cfg.use_diffusion:
            B = pg.shape[0]
            enc = timestep_encoding(self._timesteps(t, B, pg.device), self.cfg.d_joint).to(pg.dtype)
            h = h + enc[:, None, :]
        return self.head(h)

    # -- composed ---------------------------------------------------------
    def encode_condition(self, batch):
        fp_prime = self.deformable_context_extract(batch.maps, batch.pose2d)
        objs = self.encode_objects(batch.obj_class, batch.obj_loc, batch.obj_mask)
        return Condition(fp_prime, objs)

    def denoise(self, cond, x_t, t):
        fp = self.assemble_fp(cond.fp_prime, x_t, t)
        bsp = self.joint_to_joint_attention(self.pose_to_context_attention(fp))
        pg = self.object_to_context(cond.objects, bsp)
        return self.regression_head(pg, t)

    def forward(self, batch, x_t, t):
        return self.denoise(self.encode_condition(batch), x_t, t)


def make_denoiser(model, cond, H):
    """Adapter from a model + batched condition to the numpy callable used by
    :func:`gazelift.diffusion.sample_hypotheses`."""
    cond_h = cond.repeat(H)
    dtype = next(model.parameters()).dtype

    def denoiser(x, t):
        B = x.shape[0]
        xt = torch.as_tensor(np.asarray(x).reshape(B * H, *x.shape[2:]), dtype=dtype)
        with torch.no_grad():
            out = model.denoise(cond_h, xt, int(t))
        return out.to(torch.float64).numpy().reshape(x.shape)

    return denoiser


CKPT_MAGIC = b"GZCK"
CKPT_VERSION = 1


def save_checkpoint(path, model, meta=None):
    header = dict(model.cfg.to_dict())
    header.update(meta or {})
    records = [Packer().string(name).array(t.detach().to(torch.float64).cpu().numpy()).bytes()
               for name, t in model.state_dict().items()]
    write_container(path, CKPT_MAGIC, CKPT_VERSION, encode_header(header), records)


def load_checkpoint(path, dtype=torch.float32):
    """Return ``(model, header_dict)``."""
    _, header, payloads = read_container(path, CKPT_MAGIC, {CKPT_VERSION})
    meta = decode_header(header)
    model = GazePoseDenoiser(ModelConfig.from_mapping(meta))
    state = {}
    for buf in payloads:
        u = Unpacker(buf)
        name, arr = u.string(), u.array()
        u.done()
        state[name] = torch.from_numpy(arr)
    model.load_state_dict(state)
    model.to(dtype)
    model.eval()
    return model, meta


def count_parameters(model):
    return sum(p.numel() for p in model.parameters())


__all__ = ["GazePoseDenoiser", "Condition", "ObjectDescriptors", "make_denoiser",
           "save_checkpoint", "load_checkpoint"]
