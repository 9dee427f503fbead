"""Dual-head mask decoder.

Per-task multi-scale features are fused into base semantics at the finest
pyramid resolution; semantic queries attend over them to emit per-query
candidate masks; the predicted function mask conditions the dependency head
(feature injection plus a log-probability attention bias); candidates are
aggregated by a squeeze-excitation module and progressively upsampled to the
input resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .attention import MultiHeadAttention
from .mixer import TASK_DEP, TASK_FUNC, TASK_SHARED, MixedFeatures

MASK_EPS = 1e-6


@dataclass
class MaskPrediction:
    """Logit maps at input resolution plus per-query candidates at base resolution."""

    func_logits: torch.Tensor      # (B, H, W)
    dep_logits: torch.Tensor       # (B, H, W)
    func_candidates: torch.Tensor  # (B, N_q, H/4, W/4)
    dep_candidates: torch.Tensor   # (B, N_q, H/4, W/4)
    aux_func: torch.Tensor         # (B, H, W) upsampled averaged candidates
    aux_dep: torch.Tensor          # (B, H, W)


class SqueezeExciteAggregator(nn.Module):
    """Fuse N_q candidate maps into one map via sigmoid excitation weights.

    Disabled mode degrades to the unweighted mean of the candidates.
    """

    def __init__(self, n_candidates: int, enabled: bool = True):
        super().__init__()
        self.enabled = enabled
        hidden = max(2, n_candidates // 2)
        self.fc1 = nn.Linear(n_candidates, hidden)
        self.fc2 = nn.Linear(hidden, n_candidates)
        self.out_proj = nn.Conv2d(1, 1, kernel_size=1)
        nn.init.ones_(self.out_proj.weight)
        nn.init.zeros_(self.out_proj.bias)

    def excitation(self, candidates: torch.Tensor) -> torch.Tensor:
        squeeze = candidates.mean(dim=(2, 3))  # (B, N_q) global average pool
        return torch.sigmoid(self.fc2(torch.relu(self.fc1(squeeze))))

    def forward(self, candidates: torch.Tensor) -> torch.Tensor:
        """candidates: (B, N_q, h, w) -> fused (B, h, w)."""
        if not self.enabled:
            return candidates.mean(dim=1)
        w = self.excitation(candidates)
        fused = (w[:, :, None, None] * candidates).sum(dim=1, keepdim=True)
        return self.out_proj(fused).squeeze(1)


class MaskQueryHead(nn.Module):
    """Semantic queries (task prompt + learned embeddings) cross-attend over
    base features; each query's embedding dots against per-pixel features to
    form one candidate mask."""

    def __init__(self, width: int, prompt_dim: int, n_queries: int, n_heads: int):
        super().__init__()
        self.n_queries = n_queries
        self.width = width
        self.prompt_proj = nn.Linear(prompt_dim, width)
        self.query_embed = nn.Parameter(torch.randn(n_queries, width) * 0.02)
        self.attn = MultiHeadAttention(width, n_heads)

    def forward(self, base: torch.Tensor, prompt: torch.Tensor,
                attn_bias: torch.Tensor | None = None) -> torch.Tensor:
        """base: (B, C, h, w), prompt: (prompt_dim,) -> candidates (B, N_q, h, w)."""
        b, c, h, w = base.shape
        queries = (self.prompt_proj(prompt) + self.query_embed).unsqueeze(0).expand(b, -1, -1)
        pixels = base.flatten(2).transpose(1, 2)            # (B, h*w, C)
        embeddings = self.attn(queries, pixels, attn_bias)  # (B, N_q, C)
        cands = torch.einsum("bqc,bchw->bqhw", embeddings, base) / (c ** 0.5)
        return cands


class ProgressiveUpsampler(nn.Module):
    """Two x2 bilinear stages, each followed by a residual conv refinement of the
    logit map. The refinement output conv is zero-initialized, so the module
    starts as plain bilinear upsampling and learns boundary sharpening."""

    def __init__(self, stages: int = 2, hidden: int = 8):
        super().__init__()
        self.refine = nn.ModuleList()
        for _ in range(stages):
            conv_in = nn.Conv2d(1, hidden, kernel_size=3, padding=1)
            conv_out = nn.Conv2d(hidden, 1, kernel_size=3, padding=1)
            nn.init.zeros_(conv_out.weight)
            nn.init.zeros_(conv_out.bias)
            self.refine.append(nn.Sequential(conv_in, nn.GELU(), conv_out))

    def forward(self, logits: torch.Tensor) -> torch.Tensor:
        """(B, h, w) -> (B, 4h, 4w)."""
        x = logits.unsqueeze(1)
        for stage in self.refine:
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = x + stage(x)
        return x.squeeze(1)


class DualHeadDecoder(nn.Module):
    """Function head plus mask-conditioned dependency head over mixed features.

    Ablations: se=False turns candidate aggregation into a plain mean;
    mca=False decouples the dependency head from the predicted function mask;
    dual=False shares one head (and one base) for both output masks.
    """

    def __init__(self, width: int, prompt_dim: int, n_queries: int = 8, n_heads: int = 4,
                 n_scales: int = 4, se: bool = True, mca: bool = True, dual: bool = True):
        super().__init__()
        self.width = width
        self.se = se
        self.mca = mca and dual
        self.dual = dual
        self.scale_proj = nn.ModuleList(nn.Conv2d(width, width, kernel_size=1, bias=False)
                                        for _ in range(n_scales))
        self.scale_weights = nn.Parameter(torch.ones(n_scales))
        self.func_head = MaskQueryHead(width, prompt_dim, n_queries, n_heads)
        self.se_func = SqueezeExciteAggregator(n_queries, enabled=se)
        self.se_dep = SqueezeExciteAggregator(n_queries, enabled=se)
        self.up_func = ProgressiveUpsampler()
        self.up_dep = ProgressiveUpsampler()
        if dual:
            self.dep_head = MaskQueryHead(width, prompt_dim, n_queries, n_heads)
        if self.mca:
            self.mask_embed = nn.Conv2d(1, width, kernel_size=1)

    def decode_multiscale(self, levels: list[torch.Tensor]) -> torch.Tensor:
        """1x1-project each scale, upsample to the finest, weighted sum."""
        target = levels[0].shape[-2:]
        out = None
        for weight, proj, level in zip(self.scale_weights, self.scale_proj, levels):
            x = proj(level)
            if x.shape[-2:] != target:
                x = F.interpolate(x, size=target, mode="bilinear", align_corners=False)
            out = weight * x if out is None else out + weight * x
        return out

    def condition_on_mask(self, base_dep: torch.Tensor, func_prob: torch.Tensor):
        """Inject the function-mask probability into dependency features and build
        the additive log-probability attention bias over pixels."""
        injected = base_dep + self.mask_embed(func_prob.unsqueeze(1))
        bias = torch.log(func_prob + MASK_EPS).flatten(1)[:, None, None, :]  # (B, 1, 1, h*w)
        return injected, bias

    def forward(self, mixed: MixedFeatures, prompts: dict[str, torch.Tensor]) -> MaskPrediction:
        if self.dual:
            base_func = self.decode_multiscale(mixed.visual[TASK_FUNC])
            base_dep = self.decode_multiscale(mixed.visual[TASK_DEP])
            func_cands = self.func_head(base_func, prompts[TASK_FUNC])
            func_base = self.se_func(func_cands)
            if self.mca:
                func_prob = torch.sigmoid(func_base)  # soft conditioning, gradients flow
                dep_in, bias = self.condition_on_mask(base_dep, func_prob)
            else:
                dep_in, bias = base_dep, None
            dep_cands = self.dep_head(dep_in, prompts[TASK_DEP], attn_bias=bias)
            dep_base = self.se_dep(dep_cands)
        else:
            base = self.decode_multiscale(mixed.visual[TASK_SHARED])
            cands = self.func_head(base, prompts[TASK_SHARED])
            func_cands = dep_cands = cands
            func_base = self.se_func(cands)
            dep_base = self.se_dep(cands)

        full = (func_base.shape[-2] * 4, func_base.shape[-1] * 4)
        aux_func = F.interpolate(func_cands.mean(dim=1, keepdim=True), size=full,
                                 mode="bilinear", align_corners=False).squeeze(1)
        aux_dep = F.interpolate(dep_cands.mean(dim=1, keepdim=True), size=full,
                                mode="bilinear", align_corners=False).squeeze(1)
        return MaskPrediction(
            func_logits=self.up_func(func_base),
            dep_logits=self.up_dep(dep_base),
            func_candidates=func_cands,
            dep_candidates=dep_cands,
            aux_func=aux_func,
            aux_dep=aux_dep,
        )
