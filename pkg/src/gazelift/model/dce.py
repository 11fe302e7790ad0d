"""Deformable context extraction around 2D joints."""

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..kernels import sample_features


class DeformableContextExtraction(nn.Module):
    """Multi-level deformable attention with the 2D joints as reference points.

    For every joint, level and head, ``K`` points are placed at learned offsets
    (in pixels of that level) around the joint, bilinearly sampled, and mixed
    with softmax weights. Raw features are sampled first and projected
    afterwards; by linearity this equals projecting the maps first.
    Output: ``(B, L + 1, J, d)``, the L level tokens followed by the pose token.
    """

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        L, M, K, d = cfg.L, cfg.dce_heads, cfg.K, cfg.d
        self.pose_proj = nn.Linear(2, d)
        self.joint_embed = nn.Parameter(torch.zeros(cfg.J, d))
        self.sampling_offsets = nn.Linear(d, L * M * K * 2)
        self.attention_weights = nn.Linear(d, L * M * K)
        self.level_proj = nn.ModuleList(nn.Linear(M * cfg.C, d) for _ in range(L))
        self._reset_parameters()

    def _reset_parameters(self):
        cfg = self.cfg
        nn.init.normal_(self.joint_embed, std=0.02)
        nn.init.zeros_(self.sampling_offsets.weight)
        thetas = torch.arange(cfg.dce_heads, dtype=torch.float32) * (2.0 * math.pi / cfg.dce_heads)
        grid = torch.stack([thetas.cos(), thetas.sin()], -1)
        grid = grid / grid.abs().max(-1, keepdim=True)[0]
        grid = grid.view(1, cfg.dce_heads, 1, 2).repeat(cfg.L, 1, cfg.K, 1)
        for k in range(cfg.K):
            grid[:, :, k, :] *= k + 1
        with torch.no_grad():
            self.sampling_offsets.bias.copy_(grid.reshape(-1))
        nn.init.zeros_(self.attention_weights.weight)
        nn.init.zeros_(self.attention_weights.bias)

    def pose_token(self, pose2d):
        return self.pose_proj(pose2d - 0.5)

    def forward(self, maps, pose2d):
        cfg = self.cfg
        B, J, _ = pose2d.shape
        L, M, K = cfg.L, cfg.dce_heads, cfg.K
        pose_tok = self.pose_token(pose2d)
        if not cfg.use_context:
            return pose_tok[:, None].expand(B, L + 1, J, cfg.d)
        query = pose_tok + self.joint_embed
        offsets = self.sampling_offsets(query).view(B, J, L, M, K, 2)
        weights = F.softmax(self.attention_weights(query).view(B, J, L, M, K), dim=-1)
        tokens = []
        for l, fmap in enumerate(maps):
            H_l, W_l = fmap.shape[1], fmap.shape[2]
            norm = offsets.new_tensor([W_l, H_l])
            loc = pose2d[:, :, None, None, :] + offsets[:, :, l] / norm
            sampled = sample_features(fmap, loc.reshape(B, J * M * K, 2)).view(B, J, M, K, -1)
            mixed = (weights[:, :, l, :, :, None] * sampled).sum(dim=3)
            tokens.append(self.level_proj[l](mixed.reshape(B, J, -1)))
        tokens.append(pose_tok)
        return torch.stack(tokens, dim=1)
