"""Multi-head attention with additive logit biases and a capture hook for
inspecting attention maps in tests and diagnostics."""

from __future__ import annotations

import math
from contextlib import contextmanager

import torch
from torch import nn

_capture_sink: list | None = None


@contextmanager
def capture_attention():
    """Collect every attention map computed inside the block.

    with capture_attention() as maps:
        model(...)
    # maps: list of (B, n_heads, N_q, N_k) row-stochastic tensors
    """
    global _capture_sink
    previous = _capture_sink
    _capture_sink = []
    try:
        yield _capture_sink
    finally:
        _capture_sink = previous


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention over token sequences.

    Queries and keys/values may come from different modalities; an optional
    additive bias (anything broadcastable to the (B, H, N_q, N_k) logit map)
    is applied before the softmax, so rows always sum to one.
    """

    def __init__(self, dim: int, n_heads: int = 4):
        super().__init__()
        if dim % n_heads != 0:
            raise ValueError(f"dim {dim} not divisible by n_heads {n_heads}")
        self.dim = dim
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q_proj = nn.Linear(dim, dim, bias=False)
        self.k_proj = nn.Linear(dim, dim, bias=False)
        self.v_proj = nn.Linear(dim, dim, bias=False)
        self.out_proj = nn.Linear(dim, dim, bias=False)

    def forward(self, queries: torch.Tensor, keys_values: torch.Tensor,
                attn_bias: torch.Tensor | None = None) -> torch.Tensor:
        """queries: (B, N_q, C), keys_values: (B, N_k, C) -> (B, N_q, C)."""
        b, n_q, _ = queries.shape
        n_k = keys_values.shape[1]
        h, d = self.n_heads, self.head_dim
        q = self.q_proj(queries).view(b, n_q, h, d).transpose(1, 2)      # (B, H, N_q, d)
        k = self.k_proj(keys_values).view(b, n_k, h, d).transpose(1, 2)  # (B, H, N_k, d)
        v = self.v_proj(keys_values).view(b, n_k, h, d).transpose(1, 2)  # (B, H, N_k, d)
        logits = q @ k.transpose(-2, -1) / math.sqrt(d)                  # (B, H, N_q, N_k)
        if attn_bias is not None:
            logits = logits + attn_bias
        attn = torch.softmax(logits, dim=-1)
        if _capture_sink is not None:
            _capture_sink.append(attn.detach())
        out = (attn @ v).transpose(1, 2).reshape(b, n_q, self.dim)
        return self.out_proj(out)
