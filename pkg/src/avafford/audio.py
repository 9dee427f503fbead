"""Waveform front-end: duration normalization, STFT spectrograms, and a
compact trainable encoder producing T x 128 audio token sequences."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import TooShortError

AUDIO_FEATURE_DIM = 128
TEMPORAL_PATCH = 8  # spectrogram frames per audio token


def normalize_duration(waveform: np.ndarray, sample_rate: int, target_seconds: float = 5.0) -> np.ndarray:
    """Pad (by end-to-end repetition) or center-crop a waveform to a fixed duration."""
    if waveform.ndim != 1 or waveform.size == 0:
        raise ValueError("waveform must be a nonempty 1-D array")
    target = int(round(target_seconds * sample_rate))
    n = waveform.shape[0]
    if n == target:
        return waveform
    if n > target:
        offset = (n - target) // 2
        return waveform[offset:offset + target]
    reps = -(-target // n)  # ceil
    return np.tile(waveform, reps)[:target]


@dataclass
class Spectrogram:
    """STFT magnitudes, (T_frames, F_bins), all entries >= 0."""

    mags: np.ndarray
    frame_length: int
    hop_length: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.mags.shape[0]

    @property
    def n_bins(self) -> int:
        return self.mags.shape[1]


def stft_spectrogram(waveform: np.ndarray, frame_length: int = 400, hop_length: int = 160,
                     sample_rate: int = 16000, window: str = "hann") -> Spectrogram:
    """Magnitude STFT with frame count floor((L - frame_length) / hop_length) + 1.

    window: "hann" (periodic) or "rect".
    """
    if hop_length < 1:
        raise ValueError(f"hop_length must be >= 1, got {hop_length}")
    n = waveform.shape[0]
    if n < frame_length:
        raise TooShortError(f"waveform length {n} < frame_length {frame_length}")
    if window == "hann":
        idx = np.arange(frame_length)
        win = 0.5 * (1.0 - np.cos(2.0 * np.pi * idx / frame_length))
    elif window == "rect":
        win = np.ones(frame_length)
    else:
        raise ValueError(f"unknown window {window!r}")
    frames = np.lib.stride_tricks.sliding_window_view(waveform, frame_length)[::hop_length]
    mags = np.abs(np.fft.rfft(frames * win, axis=1)).astype(np.float32)
    return Spectrogram(mags=mags, frame_length=frame_length, hop_length=hop_length, sample_rate=sample_rate)


class AudioEncoder(nn.Module):
    """Convolutional stand-in for a pretrained audio backbone.

    Three stride-2 conv blocks over the log-compressed spectrogram, frequency
    pooling, and a linear map to the 128-dim token space. One output token per
    8 spectrogram frames (ceil at the edge).
    """

    def __init__(self, channels: tuple[int, int, int] = (16, 32, 64), out_dim: int = AUDIO_FEATURE_DIM):
        super().__init__()
        blocks = []
        c_in = 1
        for c_out in channels:
            blocks += [
                nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1),
                nn.GroupNorm(max(1, c_out // 8), c_out),
                nn.GELU(),
            ]
            c_in = c_out
        self.blocks = nn.Sequential(*blocks)
        self.to_tokens = nn.Linear(c_in, out_dim)
        self.out_dim = out_dim

    def forward(self, mags: torch.Tensor) -> torch.Tensor:
        """mags: (B, T, F) nonnegative magnitudes -> (B, ceil(T/8), out_dim)."""
        x = torch.log1p(mags).unsqueeze(1)   # (B, 1, T, F)
        x = self.blocks(x)                   # (B, C, T/8, F/8)
        x = x.mean(dim=3).transpose(1, 2)    # (B, T/8, C) frequency pooling
        return self.to_tokens(x)


def encode_audio(spec: Spectrogram, encoder: AudioEncoder) -> torch.Tensor:
    """Encode one spectrogram into its (T, 128) token sequence."""
    dtype = next(encoder.parameters()).dtype
    mags = torch.from_numpy(np.ascontiguousarray(spec.mags)).to(dtype).unsqueeze(0)
    return encoder(mags).squeeze(0)


# ---------------------------------------------------------------------------
# Optional on-disk spectrogram cache format
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<3i")  # (T_frames, F_bins, sample_rate), little-endian


def save_spectrogram(spec: Spectrogram, path: str | Path) -> None:
    """Raw little-endian float32 dump with a (T, F, rate) header."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(spec.n_frames, spec.n_bins, spec.sample_rate))
        fh.write(np.ascontiguousarray(spec.mags, dtype="<f4").tobytes())


def load_spectrogram(path: str | Path, frame_length: int = 400, hop_length: int = 160) -> Spectrogram:
    with open(path, "rb") as fh:
        t, f, rate = _HEADER.unpack(fh.read(_HEADER.size))
        mags = np.frombuffer(fh.read(), dtype="<f4").reshape(t, f).copy()
    return Spectrogram(mags=mags, frame_length=frame_length, hop_length=hop_length, sample_rate=rate)
