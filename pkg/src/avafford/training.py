"""Training, evaluation (including the 5-frame repeat protocol), prediction,
checkpointing, and the ablation sweep."""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torchvision.transforms.functional as TF
from PIL import Image
from scipy.signal import resample_poly

from .audio import normalize_duration, stft_spectrogram
from .config import TrainConfig, config_from_dict, config_to_dict, _apply_dict
from .data import Sample, SplitSpec, load_audio, load_image, split_dataset
from .errors import (
    BadAudioError,
    CategoryWithoutAudioError,
    InvalidConfigError,
    MissingFileError,
    NonFiniteLossError,
)
from .losses import dependency_loss, function_loss
from .metrics import MetricReport, binarize, evaluate_split
from .model import AffordanceNet, count_parameters


# ---------------------------------------------------------------------------
# Pairing and augmentation
# ---------------------------------------------------------------------------

def pair_samples(images_per_category: dict, audios_per_category: dict, seed: int) -> list[tuple]:
    """Pair every image with one uniformly drawn same-category audio clip.

    Deterministic given seed; call once per epoch with a fresh seed to
    resample the pairing.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for cat in sorted(images_per_category):
        images = images_per_category[cat]
        audios = audios_per_category.get(cat) or []
        if images and not audios:
            raise CategoryWithoutAudioError(f"category {cat!r} has images but no audio")
        for img in images:
            pairs.append((img, audios[int(rng.integers(len(audios)))]))
    return pairs


def augment(sample: Sample, cfg: TrainConfig, rng: np.random.Generator) -> Sample:
    """Shared spatial transform for image and both masks; color jitter on the image only."""
    image, m_f, m_d = sample.image, sample.mask_func, sample.mask_dep
    if cfg.rotate:
        k = int(rng.integers(4))
        if k:
            image = np.rot90(image, k)
            m_f = np.rot90(m_f, k)
            m_d = np.rot90(m_d, k)
    if cfg.hflip and rng.uniform() < 0.5:
        image = image[:, ::-1]
        m_f = m_f[:, ::-1]
        m_d = m_d[:, ::-1]
    image = np.ascontiguousarray(image)
    if cfg.color_jitter:
        t = torch.from_numpy(image.transpose(2, 0, 1).copy())
        t = TF.adjust_brightness(t, float(rng.uniform(0.8, 1.2)))
        t = TF.adjust_contrast(t, float(rng.uniform(0.8, 1.2)))
        t = TF.adjust_saturation(t, float(rng.uniform(0.8, 1.2)))
        t = TF.adjust_hue(t, float(rng.uniform(-0.05, 0.05)))
        image = t.clamp(0, 1).numpy().transpose(1, 2, 0)
    return dataclasses.replace(
        sample,
        image=np.ascontiguousarray(image),
        mask_func=np.ascontiguousarray(m_f),
        mask_dep=np.ascontiguousarray(m_d),
    )


# ---------------------------------------------------------------------------
# Tensors and caches
# ---------------------------------------------------------------------------

def _sample_spectrogram(sample: Sample, cfg: TrainConfig) -> np.ndarray:
    wave, rate = sample.audio, sample.sample_rate
    if rate != cfg.sample_rate:
        g = np.gcd(int(cfg.sample_rate), int(rate))
        wave = resample_poly(wave.astype(np.float64), cfg.sample_rate // g, rate // g).astype(np.float32)
        rate = cfg.sample_rate
    wave = normalize_duration(wave, rate, cfg.target_seconds)
    return stft_spectrogram(wave, cfg.frame_length, cfg.hop_length, rate).mags


def build_spectrogram_cache(samples: list[Sample], cfg: TrainConfig) -> list[np.ndarray]:
    return [_sample_spectrogram(s, cfg) for s in samples]


def _image_tensor(samples: list[Sample]) -> torch.Tensor:
    return torch.from_numpy(np.stack([s.image.transpose(2, 0, 1) for s in samples])).float()


def _mask_tensor(masks: list[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(masks)).float()


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(path: str | Path, model: AffordanceNet, cfg: TrainConfig, epoch: int,
                    val_report: MetricReport | None = None) -> None:
    payload = {
        "state_dict": model.state_dict(),
        "config": config_to_dict(cfg),
        "epoch": epoch,
        "torch_rng": torch.get_rng_state(),
        "val_report": val_report.to_dict() if val_report is not None else None,
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[AffordanceNet, TrainConfig, dict]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = config_from_dict(payload["config"])
    model = AffordanceNet(cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, cfg, payload


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@torch.no_grad()
def evaluate(model: AffordanceNet, samples: list[Sample], cfg: TrainConfig,
             spec_cache: list[np.ndarray] | None = None) -> MetricReport:
    """Score a sample list with no augmentation; audio normalized to the
    protocol duration; probabilities binarized at 0.5."""
    model.eval()
    if spec_cache is None:
        spec_cache = build_spectrogram_cache(samples, cfg)
    preds, gts, cats = [], [], []
    for start in range(0, len(samples), cfg.batch_size):
        batch = samples[start:start + cfg.batch_size]
        specs = spec_cache[start:start + cfg.batch_size]
        images = _image_tensor(batch)
        mags = torch.from_numpy(np.stack(specs)).float()
        out = model(images, mags)
        func_prob = torch.sigmoid(out.func_logits).numpy()
        dep_prob = torch.sigmoid(out.dep_logits).numpy()
        for i, s in enumerate(batch):
            preds.append((binarize(func_prob[i]), binarize(dep_prob[i])))
            gts.append((s.mask_func, s.mask_dep))
            cats.append(s.category)
    return evaluate_split(preds, gts, cats)


@torch.no_grad()
def s4_protocol_eval(model: AffordanceNet, samples: list[Sample], cfg: TrainConfig,
                     n_frames: int = 5) -> MetricReport:
    """Repeat each image n_frames times, score each frame, average the frames."""
    spec_cache = build_spectrogram_cache(samples, cfg)
    frames = [evaluate(model, samples, cfg, spec_cache=spec_cache) for _ in range(n_frames)]
    mean = lambda key: float(np.mean([getattr(f, key) for f in frames]))
    per_category = {}
    for cat in frames[0].per_category:
        per_category[cat] = {
            k: (frames[0].per_category[cat][k] if k == "n_samples"
                else float(np.mean([f.per_category[cat][k] for f in frames])))
            for k in frames[0].per_category[cat]
        }
    return MetricReport(
        miou_f=mean("miou_f"), f_f=mean("f_f"), miou_d=mean("miou_d"), f_d=mean("f_d"),
        per_category=per_category, n_samples=frames[0].n_samples, per_frame=frames,
    )


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: AffordanceNet  # final weights; the best-val snapshot lives in best_state
    config: TrainConfig
    loss_trace: list[float]
    val_reports: list[MetricReport]
    best_epoch: int
    best_score: float
    best_report: MetricReport | None
    best_path: Path | None
    best_state: dict = field(repr=False, default_factory=dict)
    train_samples: list[Sample] = field(repr=False, default_factory=list)
    val_samples: list[Sample] = field(repr=False, default_factory=list)
    unseen_samples: list[Sample] = field(repr=False, default_factory=list)

    def best_model(self) -> AffordanceNet:
        model = AffordanceNet(self.config)
        model.load_state_dict(self.best_state)
        model.eval()
        return model


def _by_category(indices: list[int], samples: list[Sample]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for i in indices:
        out.setdefault(samples[i].category, []).append(i)
    return out


def train(cfg: TrainConfig, samples: list[Sample], out_dir: str | Path | None = None,
          max_steps: int | None = None, log_fn=None) -> TrainResult:
    """Run the full training loop; seed-deterministic in this single-worker form.

    Per step: pair image with same-category audio, augment, forward, apply the
    enabled losses, AdamW step. Per epoch: evaluate the val split and keep the
    checkpoint with the best (mIoU_f + mIoU_d) / 2.
    """
    cfg.validate()
    torch.manual_seed(cfg.seed)
    spec_ = SplitSpec(unseen_categories=frozenset(cfg.unseen_categories),
                      train_fraction=cfg.train_fraction, seed=cfg.seed)
    train_s, val_s, unseen_s = split_dataset(samples, spec_, allow_missing_unseen=True)
    if not train_s:
        raise InvalidConfigError("train split is empty; add samples or lower train_fraction")

    model = AffordanceNet(cfg)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)

    spec_cache = {id(s): _sample_spectrogram(s, cfg) for s in train_s + val_s}
    train_idx = list(range(len(train_s)))
    images_by_cat = _by_category(train_idx, train_s)
    audios_by_cat = _by_category(train_idx, train_s)

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    loss_trace: list[float] = []
    val_reports: list[MetricReport] = []
    best_score, best_epoch, best_report = -1.0, -1, None
    best_path = out_path / "best.pt" if out_path is not None else None
    best_state = None
    steps_done = 0

    for epoch in range(cfg.epochs):
        model.train()
        epoch_rng = np.random.default_rng(cfg.seed * 1_000_003 + epoch)
        pairs = pair_samples(images_by_cat, audios_by_cat, seed=int(epoch_rng.integers(2**31)))
        order = epoch_rng.permutation(len(pairs))
        for start in range(0, len(pairs), cfg.batch_size):
            if max_steps is not None and steps_done >= max_steps:
                break
            chunk = [pairs[i] for i in order[start:start + cfg.batch_size]]
            batch = [augment(train_s[img_i], cfg, epoch_rng) for img_i, _ in chunk]
            specs = [spec_cache[id(train_s[aud_i])] for _, aud_i in chunk]
            images = _image_tensor(batch)
            mags = torch.from_numpy(np.stack(specs)).float()
            gt_func = _mask_tensor([s.mask_func for s in batch])
            gt_dep = _mask_tensor([s.mask_dep for s in batch])
            has_dep = torch.tensor([s.has_dep for s in batch])

            pred = model(images, mags)
            loss = images.new_zeros(())
            if cfg.ablation.supervise_func:
                loss = loss + function_loss(pred, gt_func, cfg.loss)
            if cfg.ablation.supervise_dep:
                loss = loss + dependency_loss(pred, gt_dep, gt_func, has_dep, cfg.loss)
            if not torch.isfinite(loss):
                raise NonFiniteLossError(f"non-finite loss at epoch {epoch} step {steps_done}: {loss.item()}")

            if cfg.warmup_steps and steps_done < cfg.warmup_steps:
                scale = (steps_done + 1) / cfg.warmup_steps
                for group in optimizer.param_groups:
                    group["lr"] = cfg.lr * scale
            optimizer.zero_grad()
            loss.backward()
            if cfg.max_grad_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
            optimizer.step()
            loss_trace.append(float(loss.item()))
            steps_done += 1

        if val_s:
            report = evaluate(model, val_s, cfg, spec_cache=[spec_cache[id(s)] for s in val_s])
            val_reports.append(report)
            score = (report.miou_f + report.miou_d) / 2.0
            if log_fn is not None:
                log_fn(f"epoch {epoch}: loss {loss_trace[-1]:.4f} "
                       f"val mIoU_f {report.miou_f:.3f} mIoU_d {report.miou_d:.3f}")
            if score > best_score:
                best_score, best_epoch, best_report = score, epoch, report
                best_state = copy.deepcopy(model.state_dict())
                if best_path is not None:
                    save_checkpoint(best_path, model, cfg, epoch, val_report=report)
        if max_steps is not None and steps_done >= max_steps:
            break

    if best_state is None:  # no val split: keep the final weights
        best_state = copy.deepcopy(model.state_dict())
        best_epoch, best_score = cfg.epochs - 1, float("nan")
        if best_path is not None:
            save_checkpoint(best_path, model, cfg, best_epoch)

    if out_path is not None:
        save_checkpoint(out_path / "final.pt", model, cfg, cfg.epochs - 1,
                        val_report=val_reports[-1] if val_reports else None)
        (out_path / "train_log.json").write_text(json.dumps({
            "loss_trace": loss_trace,
            "val_reports": [r.to_dict() for r in val_reports],
            "best_epoch": best_epoch,
            "best_score": best_score,
        }, indent=2))

    model.eval()
    return TrainResult(
        model=model, config=cfg, loss_trace=loss_trace, val_reports=val_reports,
        best_epoch=best_epoch, best_score=best_score, best_report=best_report,
        best_path=best_path, best_state=best_state,
        train_samples=train_s, val_samples=val_s, unseen_samples=unseen_s,
    )


# ---------------------------------------------------------------------------
# Prediction to files
# ---------------------------------------------------------------------------

OVERLAY_ALPHA = 0.5
FUNC_TINT = np.array([1.0, 0.15, 0.15])
DEP_TINT = np.array([0.15, 0.3, 1.0])


def predict(model: AffordanceNet, cfg: TrainConfig, image_path: str | Path,
            audio_path: str | Path, out_dir: str | Path) -> dict[str, Path]:
    """Write func.png / dep.png (0/255 at the input resolution) and overlay.png."""
    image_path, audio_path = Path(image_path), Path(audio_path)
    for p in (image_path, audio_path):
        if not p.is_file():
            raise MissingFileError(str(p))
    original = load_image(image_path)  # native resolution
    h0, w0 = original.shape[:2]
    resized = np.asarray(
        Image.fromarray((original * 255).astype(np.uint8)).resize(
            (cfg.image_size, cfg.image_size), Image.BILINEAR),
        dtype=np.float32) / 255.0
    try:
        waveform, rate = load_audio(audio_path, cfg.sample_rate)
    except Exception as exc:
        raise BadAudioError(f"could not decode {audio_path}: {exc}") from exc
    if waveform.size == 0:
        raise BadAudioError(f"empty waveform in {audio_path}")
    func_prob, dep_prob = model.predict_probabilities(resized, waveform, rate)

    probs = torch.from_numpy(np.stack([func_prob, dep_prob]))[None]
    probs = torch.nn.functional.interpolate(probs, size=(h0, w0), mode="bilinear",
                                            align_corners=False)[0].numpy()
    func_mask = binarize(probs[0])
    dep_mask = binarize(probs[1])

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "func": out / "func.png",
        "dep": out / "dep.png",
        "overlay": out / "overlay.png",
    }
    Image.fromarray((func_mask * 255).astype(np.uint8), mode="L").save(paths["func"])
    Image.fromarray((dep_mask * 255).astype(np.uint8), mode="L").save(paths["dep"])

    overlay = original.copy()
    for mask, tint in ((func_mask, FUNC_TINT), (dep_mask, DEP_TINT)):
        sel = mask.astype(bool)
        overlay[sel] = (1 - OVERLAY_ALPHA) * overlay[sel] + OVERLAY_ALPHA * tint
    Image.fromarray((np.clip(overlay, 0, 1) * 255).round().astype(np.uint8)).save(paths["overlay"])
    return paths


# ---------------------------------------------------------------------------
# Ablation sweep
# ---------------------------------------------------------------------------

DEFAULT_ABLATION_GRID: list[tuple[str, dict]] = [
    ("baseline", {}),
    ("no_v2a", {"ablation": {"v2a": False}}),
    ("no_a2v", {"ablation": {"a2v": False}}),
    ("cha_mixer", {"ablation": {"mixer": "CHA"}}),
    ("no_se", {"ablation": {"se": False}}),
    ("no_mca", {"ablation": {"mca": False}}),
    ("single_head", {"ablation": {"dual": False}}),
    ("lambda_0.0", {"loss": {"lambda_aux": 0.0}}),
    ("lambda_0.1", {"loss": {"lambda_aux": 0.1}}),
    ("lambda_0.5", {"loss": {"lambda_aux": 0.5}}),
    ("lambda_1.0", {"loss": {"lambda_aux": 1.0}}),
]


def apply_overrides(cfg: TrainConfig, overrides: dict) -> TrainConfig:
    out = copy.deepcopy(cfg)
    _apply_dict(out, overrides)
    out.validate()
    return out


def run_ablation_suite(base_cfg: TrainConfig, samples: list[Sample],
                       grid: list[tuple[str, dict]] | None = None,
                       log_fn=None) -> list[dict]:
    """Train and evaluate every grid cell with the shared base seed; returns rows."""
    grid = DEFAULT_ABLATION_GRID if grid is None else grid
    rows = []
    for name, overrides in grid:
        cfg = apply_overrides(base_cfg, overrides)
        result = train(cfg, samples)
        report = result.best_report or evaluate(result.model, result.val_samples, cfg)
        rows.append({
            "name": name,
            "overrides": overrides,
            "n_params": count_parameters(result.model),
            "miou_f": report.miou_f,
            "f_f": report.f_f,
            "miou_d": report.miou_d,
            "f_d": report.f_d,
        })
        if log_fn is not None:
            log_fn(format_ablation_table(rows[-1:]))
    return rows


def format_ablation_table(rows: list[dict]) -> str:
    header = f"{'cell':<14} {'params':>10} {'mIoU_f':>8} {'F_f':>8} {'mIoU_d':>8} {'F_d':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r['name']:<14} {r['n_params']:>10} "
                     f"{100 * r['miou_f']:>8.2f} {100 * r['f_f']:>8.2f} "
                     f"{100 * r['miou_d']:>8.2f} {100 * r['f_d']:>8.2f}")
    return "\n".join(lines)
