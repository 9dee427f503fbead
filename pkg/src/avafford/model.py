"""End-to-end model: (image, spectrogram) -> function and dependency mask logits."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .audio import AUDIO_FEATURE_DIM, AudioEncoder, normalize_duration, stft_spectrogram
from .config import MIXER_CHA, TrainConfig
from .decoder import DualHeadDecoder, MaskPrediction
from .mixer import TASK_DEP, TASK_FUNC, TASK_SHARED, ChannelAttentionMixer, CrossModalMixer
from .visual import VisualEncoder


class AffordanceNet(nn.Module):
    """Audio encoder + visual pyramid + cross-modal mixer + dual-head decoder."""

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        ab = cfg.ablation
        tasks = (TASK_FUNC, TASK_DEP) if ab.dual else (TASK_SHARED,)
        self.tasks = tasks
        self.audio_encoder = AudioEncoder(channels=cfg.audio_channels)
        self.visual_encoder = VisualEncoder(
            channels=cfg.backbone_channels,
            width=cfg.visual_width,
            enhancer_layers=cfg.enhancer_layers,
            enhancer_heads=cfg.enhancer_heads,
        )
        if ab.mixer == MIXER_CHA:
            self.mixer = ChannelAttentionMixer(
                visual_width=cfg.visual_width,
                audio_width=AUDIO_FEATURE_DIM,
                embed_dim=cfg.embed_dim,
                tasks=tasks,
            )
        else:
            self.mixer = CrossModalMixer(
                visual_width=cfg.visual_width,
                audio_width=AUDIO_FEATURE_DIM,
                embed_dim=cfg.embed_dim,
                n_heads=cfg.n_heads,
                tasks=tasks,
                v2a=ab.v2a,
                a2v=ab.a2v,
            )
        self.decoder = DualHeadDecoder(
            width=cfg.visual_width,
            prompt_dim=cfg.embed_dim,
            n_queries=cfg.n_queries,
            n_heads=cfg.n_heads,
            se=ab.se,
            mca=ab.mca,
            dual=ab.dual,
        )

    def forward(self, images: torch.Tensor, spec_mags: torch.Tensor) -> MaskPrediction:
        """images: (B, 3, H, W) in [0, 1]; spec_mags: (B, T, F) magnitudes."""
        audio = self.audio_encoder(spec_mags)
        pyramid = self.visual_encoder(images)
        mixed = self.mixer(pyramid, audio)
        return self.decoder(mixed, self.mixer.task_prompts())

    def prepare_waveform(self, waveform: np.ndarray, sample_rate: int) -> np.ndarray:
        """Normalize a raw waveform to the protocol duration and take its spectrogram."""
        wave = normalize_duration(waveform, sample_rate, self.cfg.target_seconds)
        spec = stft_spectrogram(wave, self.cfg.frame_length, self.cfg.hop_length, sample_rate)
        return spec.mags

    @torch.no_grad()
    def predict_probabilities(self, image: np.ndarray, waveform: np.ndarray,
                              sample_rate: int) -> tuple[np.ndarray, np.ndarray]:
        """One unbatched sample -> (func_prob, dep_prob) at the model resolution."""
        self.eval()
        dtype = next(self.parameters()).dtype
        img = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).to(dtype).unsqueeze(0)
        mags = torch.from_numpy(self.prepare_waveform(waveform, sample_rate)).to(dtype).unsqueeze(0)
        pred = self(img, mags)
        return (
            torch.sigmoid(pred.func_logits)[0].numpy(),
            torch.sigmoid(pred.dep_logits)[0].numpy(),
        )


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
