"""Samples, manifests, category splits, synthetic data, and perceptual-hash dedup."""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import (
    EmptySeenSetError,
    InvalidConfigError,
    MalformedRecordError,
    MissingFileError,
)

SHAPE_KINDS = ("disk", "square", "triangle", "ring", "cross", "diamond")
_VERBS = ("tap", "rub", "shake", "press", "strike", "pluck")


@dataclass
class Sample:
    """One image + one audio clip with its function and dependency region masks.

    image: (H, W, 3) float array, values in [0, 1]
    audio: 1-D float waveform at ``sample_rate`` Hz
    mask_func / mask_dep: (H, W) binary arrays in {0, 1}
    category: "affordance@object" label
    has_dep: False when the category carries no dependency annotation
    """

    image: np.ndarray
    audio: np.ndarray
    sample_rate: int
    mask_func: np.ndarray
    mask_dep: np.ndarray
    category: str
    has_dep: bool = True

    def validate(self) -> None:
        h, w = self.image.shape[:2]
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"image must be (H, W, 3), got {self.image.shape}")
        for name, mask in (("mask_func", self.mask_func), ("mask_dep", self.mask_dep)):
            if mask.shape != (h, w):
                raise ValueError(f"{name} shape {mask.shape} != image spatial dims {(h, w)}")
            vals = np.unique(mask)
            if not np.isin(vals, (0, 1)).all():
                raise ValueError(f"{name} values must be in {{0, 1}}, got {vals}")
        if self.category.count("@") != 1:
            raise ValueError(f"category must contain exactly one '@': {self.category!r}")
        if not self.has_dep and self.mask_dep.any():
            raise ValueError("has_dep=False requires an all-zero mask_dep")
        if self.audio.ndim != 1 or self.audio.size == 0:
            raise ValueError("audio must be a nonempty 1-D waveform")


@dataclass(frozen=True)
class ManifestRecord:
    image_path: str
    audio_path: str
    mask_func_path: str
    mask_dep_path: str | None
    category: str


@dataclass
class Manifest:
    records: list[ManifestRecord]
    root: Path

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic seen/unseen + train/val partition parameters."""

    unseen_categories: frozenset[str] = frozenset()
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def parse_manifest(path: str | Path) -> Manifest:
    """Parse a tab-separated manifest file and verify every referenced asset exists.

    One record per line: image_path, audio_path, mask_func_path,
    mask_dep_path ("-" when absent), category. Relative paths resolve
    against the manifest's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"manifest not found: {path}")
    root = path.parent
    records: list[ManifestRecord] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) != 5:
            raise MalformedRecordError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}")
        image_path, audio_path, func_path, dep_path, category = fields
        if category.count("@") != 1:
            raise MalformedRecordError(f"{path}:{lineno}: category {category!r} must contain exactly one '@'")
        dep: str | None = None if dep_path == "-" else dep_path
        for asset in (image_path, audio_path, func_path) + ((dep,) if dep else ()):
            if not (root / asset).is_file():
                raise MissingFileError(f"{path}:{lineno}: missing asset {asset}")
        records.append(ManifestRecord(image_path, audio_path, func_path, dep, category))
    seen_pairs = set()
    for rec in records:
        key = (rec.image_path, rec.audio_path)
        if key in seen_pairs:
            raise MalformedRecordError(f"duplicate (image, audio) pair: {key}")
        seen_pairs.add(key)
    return Manifest(records=records, root=root)


def split_dataset(manifest, spec: SplitSpec, allow_missing_unseen: bool = False):
    """Partition manifest records (or any items with a .category) into train/val/unseen.

    Unseen categories go wholesale to the unseen list. Every remaining
    category is split independently: train takes floor(n * train_fraction)
    items, the remainder goes to val. Deterministic given spec.seed.
    """
    items = list(manifest.records) if isinstance(manifest, Manifest) else list(manifest)
    categories = {it.category for it in items}
    missing = set(spec.unseen_categories) - categories
    if missing and not allow_missing_unseen:
        raise InvalidConfigError(f"unseen categories absent from manifest: {sorted(missing)}")
    seen_cats = sorted(categories - set(spec.unseen_categories))
    if items and not seen_cats:
        raise EmptySeenSetError("all categories are marked unseen")

    unseen = [it for it in items if it.category in spec.unseen_categories]
    rng = np.random.default_rng(spec.seed)
    train: list = []
    val: list = []
    for cat in seen_cats:
        members = [it for it in items if it.category == cat]
        order = rng.permutation(len(members))
        n_train = int(np.floor(len(members) * spec.train_fraction))
        for rank, idx in enumerate(order):
            (train if rank < n_train else val).append(members[idx])
    return train, val, unseen


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic dataset parameters: each category is one (shape, tone) pair."""

    image_size: int = 64
    n_samples: int = 32
    n_categories: int = 4
    duration_range: tuple[float, float] = (2.0, 7.0)
    sample_rate: int = 8000
    tone_base_hz: float = 300.0
    tone_step_hz: float = 170.0
    tone_amplitude: float = 0.6
    noise_amplitude: float = 0.02
    dep_less_every: int = 0  # every k-th category has no dependency region; 0 disables

    def validate(self) -> None:
        if min(self.image_size, self.n_samples, self.n_categories, self.sample_rate) <= 0:
            raise InvalidConfigError("image_size, n_samples, n_categories, sample_rate must be positive")
        lo, hi = self.duration_range
        if lo <= 0 or hi < lo:
            raise InvalidConfigError(f"bad duration_range {self.duration_range}")
        top_tone = self.tone_base_hz + self.tone_step_hz * (self.n_categories - 1)
        if top_tone >= 0.45 * self.sample_rate:
            raise InvalidConfigError(f"tone {top_tone} Hz too close to Nyquist for sample_rate {self.sample_rate}")


def synth_category_name(index: int) -> str:
    verb = _VERBS[index % len(_VERBS)]
    shape = SHAPE_KINDS[index % len(SHAPE_KINDS)]
    return f"{verb}@{shape}{index}"


def rasterize_shape(kind: str, size: int, center: tuple[float, float], radius: float) -> np.ndarray:
    """Rasterize one shape family onto a size x size canvas; returns a bool mask."""
    cy, cx = center
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    r = float(radius)
    if kind == "disk":
        return dy * dy + dx * dx <= r * r
    if kind == "square":
        return (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if kind == "triangle":
        # apex at the top, base at cy + r
        inside_rows = (dy >= -r) & (dy <= r)
        halfwidth = (dy + r) / 2.0
        return inside_rows & (np.abs(dx) <= halfwidth)
    if kind == "ring":
        d2 = dy * dy + dx * dx
        return (d2 <= r * r) & (d2 >= (0.55 * r) ** 2)
    if kind == "cross":
        arm = max(1.0, r / 3.0)
        return ((np.abs(dx) <= arm) & (np.abs(dy) <= r)) | ((np.abs(dy) <= arm) & (np.abs(dx) <= r))
    if kind == "diamond":
        return np.abs(dy) + np.abs(dx) <= r
    raise InvalidConfigError(f"unknown shape kind {kind!r}")


def _split_function_part(shape_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Top third of the shape's occupied rows is the function part, rest is dependency."""
    rows = np.where(shape_mask.any(axis=1))[0]
    y0, y1 = rows[0], rows[-1]
    cut = y0 + max(1, (y1 - y0 + 1) // 3)
    row_index = np.arange(shape_mask.shape[0])[:, None]
    func = shape_mask & (row_index < cut)
    dep = shape_mask & ~func
    return func, dep


def generate_synthetic(config: SynthConfig, seed: int) -> list[Sample]:
    """Deterministically generate samples whose audio tone identifies the shape category."""
    config.validate()
    rng = np.random.default_rng(seed)
    size = config.image_size
    samples: list[Sample] = []
    for i in range(config.n_samples):
        cat_idx = i % config.n_categories
        category = synth_category_name(cat_idx)
        kind = SHAPE_KINDS[cat_idx % len(SHAPE_KINDS)]
        has_dep = not (config.dep_less_every > 0 and cat_idx % config.dep_less_every == config.dep_less_every - 1)

        radius = rng.uniform(size / 6.0, size / 4.0)
        margin = radius + 2.0
        cy = rng.uniform(margin, size - margin)
        cx = rng.uniform(margin, size - margin)
        shape = rasterize_shape(kind, size, (cy, cx), radius)
        func, dep = _split_function_part(shape)
        if not has_dep:
            dep = np.zeros_like(dep)

        color = np.array(colorsys.hsv_to_rgb(cat_idx / config.n_categories, 0.85, 0.9))
        image = rng.uniform(0.0, 0.2, size=(size, size, 3))
        image[shape] = color + rng.normal(0.0, 0.02, size=(int(shape.sum()), 3))
        image = np.clip(image, 0.0, 1.0).astype(np.float32)

        duration = rng.uniform(*config.duration_range)
        n = int(round(duration * config.sample_rate))
        t = np.arange(n, dtype=np.float64) / config.sample_rate
        tone = config.tone_base_hz + config.tone_step_hz * cat_idx
        wave = config.tone_amplitude * np.sin(2.0 * np.pi * tone * t)
        wave = wave + config.noise_amplitude * rng.standard_normal(n)
        wave = np.clip(wave, -1.0, 1.0).astype(np.float32)

        samples.append(
            Sample(
                image=image,
                audio=wave,
                sample_rate=config.sample_rate,
                mask_func=func.astype(np.uint8),
                mask_dep=dep.astype(np.uint8),
                category=category,
                has_dep=has_dep,
            )
        )
    return samples


# ---------------------------------------------------------------------------
# Disk round-trip
# ---------------------------------------------------------------------------

def write_synthetic_dataset(samples: list[Sample], out_dir: str | Path) -> Path:
    """Write samples as PNG/WAV assets plus a manifest.tsv; returns the manifest path."""
    out = Path(out_dir)
    for sub in ("images", "audio", "masks"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s in enumerate(samples):
        img_rel = f"images/{i:05d}.png"
        aud_rel = f"audio/{i:05d}.wav"
        func_rel = f"masks/{i:05d}_func.png"
        dep_rel = f"masks/{i:05d}_dep.png" if s.has_dep else "-"
        Image.fromarray((np.clip(s.image, 0, 1) * 255).round().astype(np.uint8)).save(out / img_rel)
        wavfile.write(out / aud_rel, s.sample_rate, (np.clip(s.audio, -1, 1) * 32767).astype(np.int16))
        Image.fromarray((s.mask_func * 255).astype(np.uint8), mode="L").save(out / func_rel)
        if s.has_dep:
            Image.fromarray((s.mask_dep * 255).astype(np.uint8), mode="L").save(out / dep_rel)
        lines.append("\t".join([img_rel, aud_rel, func_rel, dep_rel, s.category]))
    manifest_path = out / "manifest.tsv"
    manifest_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return manifest_path


def load_image(path: str | Path, image_size: int | None = None) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    if image_size is not None:
        img = img.resize((image_size, image_size), Image.BILINEAR)
    return np.asarray(img, dtype=np.float32) / 255.0


def load_mask(path: str | Path, image_size: int | None = None) -> np.ndarray:
    img = Image.open(path).convert("L")
    if image_size is not None:
        img = img.resize((image_size, image_size), Image.NEAREST)
    return (np.asarray(img) > 127).astype(np.uint8)


def load_audio(path: str | Path, sample_rate: int | None = None) -> tuple[np.ndarray, int]:
    """Load a WAV file as a mono float waveform in [-1, 1], resampling if asked."""
    rate, data = wavfile.read(path)
    if data.ndim > 1:
        data = data.mean(axis=1)
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float32) / float(np.iinfo(data.dtype).max)
    else:
        data = data.astype(np.float32)
    if sample_rate is not None and rate != sample_rate:
        g = np.gcd(int(sample_rate), int(rate))
        data = resample_poly(data.astype(np.float64), sample_rate // g, rate // g).astype(np.float32)
        rate = sample_rate
    return data, rate


def load_manifest_samples(manifest: Manifest, image_size: int | None = None,
                          sample_rate: int | None = None) -> list[Sample]:
    """Materialize every manifest record into an in-memory Sample."""
    samples = []
    for rec in manifest.records:
        image = load_image(manifest.root / rec.image_path, image_size)
        mask_func = load_mask(manifest.root / rec.mask_func_path, image_size)
        if rec.mask_dep_path is not None:
            mask_dep = load_mask(manifest.root / rec.mask_dep_path, image_size)
            has_dep = True
        else:
            mask_dep = np.zeros_like(mask_func)
            has_dep = False
        audio, rate = load_audio(manifest.root / rec.audio_path, sample_rate)
        samples.append(
            Sample(
                image=image,
                audio=audio,
                sample_rate=rate,
                mask_func=mask_func,
                mask_dep=mask_dep,
                category=rec.category,
                has_dep=has_dep,
            )
        )
    return samples


# ---------------------------------------------------------------------------
# Perceptual-hash dedup
# ---------------------------------------------------------------------------

def average_hash(image: np.ndarray) -> int:
    """64-bit average hash: downscale to 8x8 grayscale, threshold at the mean."""
    if image.ndim == 3:
        gray = image @ np.array([0.299, 0.587, 0.114])
    else:
        gray = image
    arr = (np.clip(gray, 0.0, 1.0) * 255).astype(np.uint8)
    small = np.asarray(Image.fromarray(arr).resize((8, 8), Image.BILINEAR), dtype=np.float64)
    bits = (small >= small.mean()).flatten()
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def hamming_distance(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def dedup_perceptual_hash(images: list[np.ndarray], max_hamming: int) -> list[int]:
    """Greedy dedup: keep an image iff its hash is more than max_hamming bits
    from every previously kept hash. Returns kept indices in input order."""
    if max_hamming < 0:
        raise InvalidConfigError(f"max_hamming must be >= 0, got {max_hamming}")
    kept: list[int] = []
    kept_hashes: list[int] = []
    for i, img in enumerate(images):
        if img.size == 0:
            raise InvalidConfigError(f"image {i} is empty")
        h = average_hash(img)
        if all(hamming_distance(h, other) > max_hamming for other in kept_hashes):
            kept.append(i)
            kept_hashes.append(h)
    return kept
