"""Semantic-conditioned cross-modal mixing.

Both modalities are projected into a shared embedding space; per-task prompt
vectors plus global modality magnitudes drive adaptive attention biases;
bidirectional cross-attention (audio <- vision and vision <- audio) is merged
back through task-aware sigmoid gates. A channel-attention variant rescales
visual channels from pooled audio instead of attending token-to-token.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .attention import MultiHeadAttention
from .errors import ShapeMismatchError
from .visual import FeaturePyramid

TASK_FUNC = "func"
TASK_DEP = "dep"
TASK_SHARED = "shared"  # single-head ablation


@dataclass
class MixedFeatures:
    """Task-conditioned outputs: per-scale visual maps and one audio sequence per task."""

    visual: dict[str, list[torch.Tensor]]  # task -> [(B, C_v, H_i, W_i)] * 4
    audio: dict[str, torch.Tensor]         # task -> (B, N_a, C)

    @property
    def tasks(self) -> tuple[str, ...]:
        return tuple(self.visual.keys())


class BiasNet(nn.Module):
    """Maps (prompt, m_v, m_a) to one additive attention-logit offset per head.

    The final layer starts at zero so training begins from unbiased attention.
    """

    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.fc1 = nn.Linear(dim + 2, dim)
        self.fc2 = nn.Linear(dim, n_heads)
        nn.init.zeros_(self.fc2.weight)
        nn.init.zeros_(self.fc2.bias)

    def forward(self, prompt: torch.Tensor, m_v: torch.Tensor, m_a: torch.Tensor) -> torch.Tensor:
        b = m_v.shape[0]
        x = torch.cat([prompt.unsqueeze(0).expand(b, -1), m_v, m_a], dim=-1)
        return self.fc2(torch.relu(self.fc1(x)))  # (B, n_heads)


class TaskContext(nn.Module):
    """Learned conditioning for one semantic task type (function or dependency):
    prompt vectors, gate weight matrices, and attention-bias networks."""

    def __init__(self, task: str, dim: int, n_heads: int):
        super().__init__()
        self.task = task
        self.prompt_v = nn.Parameter(torch.randn(dim) * 0.02)
        self.prompt_a = nn.Parameter(torch.randn(dim) * 0.02)
        self.gate_v = nn.Linear(dim, dim, bias=False)
        self.gate_a = nn.Linear(dim, dim, bias=False)
        self.bias_net_v = BiasNet(dim, n_heads)
        self.bias_net_a = BiasNet(dim, n_heads)

    def gate(self, direction: str) -> torch.Tensor:
        """Per-channel fusion gate in (0, 1), shape (dim,)."""
        if direction == "v":
            return torch.sigmoid(self.gate_v(self.prompt_v))
        return torch.sigmoid(self.gate_a(self.prompt_a))


def modality_magnitudes(x_v: torch.Tensor, x_a: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean per-token L2 norm for each modality; (B, N, C) -> (B, 1) each."""
    m_v = x_v.norm(dim=-1).mean(dim=1, keepdim=True)
    m_a = x_a.norm(dim=-1).mean(dim=1, keepdim=True)
    return m_v, m_a


def semantic_bias(ctx: TaskContext, m_v: torch.Tensor, m_a: torch.Tensor, direction: str) -> torch.Tensor:
    """Adaptive per-head attention bias, shaped (B, n_heads, 1, 1) for broadcast."""
    net = ctx.bias_net_v if direction == "v" else ctx.bias_net_a
    prompt = ctx.prompt_v if direction == "v" else ctx.prompt_a
    return net(prompt, m_v, m_a)[:, :, None, None]


def gated_merge(fused: torch.Tensor, projected: torch.Tensor, ctx: TaskContext, direction: str) -> torch.Tensor:
    """Elementwise convex combination g * fused + (1 - g) * projected with a
    per-channel sigmoid gate derived from the task prompt."""
    if fused.shape != projected.shape:
        raise ShapeMismatchError(f"fused {tuple(fused.shape)} vs projected {tuple(projected.shape)}")
    g = ctx.gate(direction)
    return g * fused + (1.0 - g) * projected


class CrossModalMixer(nn.Module):
    """Bidirectional bias-modulated gated cross-attention (the cross-attention mixer).

    Applied independently per visual scale and per task; attention weights are
    shared across scales but separate per task. The per-task audio output is
    the mean of the per-scale fused audio sequences.
    """

    def __init__(self, visual_width: int, audio_width: int, embed_dim: int, n_heads: int = 4,
                 tasks: tuple[str, ...] = (TASK_FUNC, TASK_DEP), v2a: bool = True, a2v: bool = True):
        super().__init__()
        self.embed_dim = embed_dim
        self.v2a = v2a  # vision-to-audio fusion: audio queries attend to visual tokens
        self.a2v = a2v  # audio-to-vision fusion: visual queries attend to audio tokens
        self.tasks = tasks
        self.proj_v = nn.Linear(visual_width, embed_dim, bias=False)
        self.proj_a = nn.Linear(audio_width, embed_dim, bias=False)
        self.back_proj = nn.Linear(embed_dim, visual_width, bias=False)
        self.contexts = nn.ModuleDict({t: TaskContext(t, embed_dim, n_heads) for t in tasks})
        self.attn_v_from_a = nn.ModuleDict({t: MultiHeadAttention(embed_dim, n_heads) for t in tasks})
        self.attn_a_from_v = nn.ModuleDict({t: MultiHeadAttention(embed_dim, n_heads) for t in tasks})

    def task_prompts(self) -> dict[str, torch.Tensor]:
        return {t: self.contexts[t].prompt_v for t in self.tasks}

    def project_shared(self, tokens_v: torch.Tensor, tokens_a: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Linear (bias-free) projection of both token sets into the shared space."""
        return self.proj_v(tokens_v), self.proj_a(tokens_a)

    def _mix_one_scale(self, x_v: torch.Tensor, x_a_tilde: torch.Tensor, task: str):
        """x_v: (B, C_v, H, W) one scale; x_a_tilde: (B, N_a, C) pre-projected audio.

        Audio is fused from vision first; vision then attends to the updated
        audio, so the vision-to-audio direction can influence the mask path.
        """
        b, c_v, h, w = x_v.shape
        tokens_v = x_v.flatten(2).transpose(1, 2)       # (B, H*W, C_v)
        x_v_tilde = self.proj_v(tokens_v)               # (B, H*W, C)
        m_v, m_a = modality_magnitudes(x_v_tilde, x_a_tilde)
        ctx = self.contexts[task]

        if self.v2a:
            bias_a = semantic_bias(ctx, m_v, m_a, "a")
            fused_a = self.attn_a_from_v[task](x_a_tilde, x_v_tilde, attn_bias=bias_a)
            out_a = gated_merge(fused_a, x_a_tilde, ctx, "a")
        else:
            out_a = x_a_tilde

        if self.a2v:
            bias_v = semantic_bias(ctx, m_v, m_a, "v")
            fused_v = self.attn_v_from_a[task](x_v_tilde, out_a, attn_bias=bias_v)
            out_v = gated_merge(fused_v, x_v_tilde, ctx, "v")
        else:
            out_v = x_v_tilde

        visual = self.back_proj(out_v).transpose(1, 2).reshape(b, c_v, h, w)
        return visual, out_a

    def forward(self, pyr: FeaturePyramid, audio: torch.Tensor) -> MixedFeatures:
        """audio: (B, N_a, audio_width) token sequence."""
        x_a_tilde = self.proj_a(audio)
        visual: dict[str, list[torch.Tensor]] = {}
        audio_out: dict[str, torch.Tensor] = {}
        for task in self.tasks:
            maps, auds = [], []
            for level in pyr.levels:
                v, a = self._mix_one_scale(level, x_a_tilde, task)
                maps.append(v)
                auds.append(a)
            visual[task] = maps
            audio_out[task] = torch.stack(auds).mean(dim=0)
        return MixedFeatures(visual=visual, audio=audio_out)


class ChannelAttentionMixer(nn.Module):
    """Ablation variant: pooled audio drives per-channel sigmoid weights that
    rescale visual channels (squeeze-excitation style), no token-level
    cross-attention. Excitation biases start at zero so silent audio yields
    uniform 0.5 scaling."""

    def __init__(self, visual_width: int, audio_width: int, embed_dim: int,
                 tasks: tuple[str, ...] = (TASK_FUNC, TASK_DEP), reduction: int = 4):
        super().__init__()
        self.tasks = tasks
        self.proj_a = nn.Linear(audio_width, embed_dim, bias=False)
        hidden = max(4, visual_width // reduction)
        self.excite = nn.ModuleDict()
        self.prompts = nn.ParameterDict()
        for t in tasks:
            fc1 = nn.Linear(audio_width, hidden)
            fc2 = nn.Linear(hidden, visual_width)
            nn.init.zeros_(fc1.bias)
            nn.init.zeros_(fc2.bias)
            self.excite[t] = nn.Sequential(fc1, nn.ReLU(), fc2)
            self.prompts[t] = nn.Parameter(torch.randn(embed_dim) * 0.02)

    def task_prompts(self) -> dict[str, torch.Tensor]:
        return {t: self.prompts[t] for t in self.tasks}

    def channel_weights(self, audio: torch.Tensor, task: str) -> torch.Tensor:
        pooled = audio.mean(dim=1)  # (B, audio_width)
        return torch.sigmoid(self.excite[task](pooled))  # (B, C_v)

    def forward(self, pyr: FeaturePyramid, audio: torch.Tensor) -> MixedFeatures:
        x_a_tilde = self.proj_a(audio)
        visual: dict[str, list[torch.Tensor]] = {}
        audio_out: dict[str, torch.Tensor] = {}
        for task in self.tasks:
            w = self.channel_weights(audio, task)[:, :, None, None]
            visual[task] = [level * w for level in pyr.levels]
            audio_out[task] = x_a_tilde
        return MixedFeatures(visual=visual, audio=audio_out)
