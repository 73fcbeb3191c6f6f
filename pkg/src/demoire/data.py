"""Data supply: parametric synthetic interference patterns and ingestion.

Synthesis: the contamination layer is the product of two sinusoidal gratings
at frequencies f1, f2 whose directions differ by a rotation theta; the
product beats at a much lower spatial frequency (period 1/(2 f sin(theta/2))
when f1 = f2), which is what makes the stripes and ripples. The pattern
drifts over frames while the underlying content stays put. Contamination is
multiplicative-plus-additive per channel with unequal channel gains, so the
artifact both darkens and colorizes:

    out_c = clean_c * (1 - w_c) + w_c * m,   w_c = gain_c * contrast * m

where m in [0, 1] is the pattern. Zero gains reproduce the clean clip
exactly.

On-disk layout (also produced by `make_synthetic_benchmark`):

    <root>/<split>/<seq_id>/moire/<%05d>.png
    <root>/<split>/<seq_id>/gt/<%05d>.png

plus a `manifest.json` at the root recording generator parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw, ImageFont

from .errors import ConfigurationError, IngestionError, ShapeError


@dataclass
class MoireParams:
    """Parameters of the synthetic interference pattern."""

    f1: float = 0.12          # cycles/pixel of the first grating
    f2: float = 0.15          # cycles/pixel of the second grating
    theta: float = 0.3        # relative rotation between gratings, radians
    gains: tuple = (0.9, 0.55, 0.8)   # per-channel amplitude (sensor imbalance)
    contrast: float = 0.7
    drift: tuple = (1.5, -0.7)        # pattern velocity, pixels/frame (dy, dx)
    seed: int = 0

    def validate(self) -> None:
        for name, f in (("f1", self.f1), ("f2", self.f2)):
            if not (0.0 < f < 0.5):
                raise ConfigurationError(f"{name} must lie in (0, 0.5), got {f}")
        if len(self.gains) != 3 or any(g < 0 for g in self.gains):
            raise ConfigurationError(f"gains must be 3 non-negative values, got {self.gains}")
        if self.contrast < 0:
            raise ConfigurationError(f"contrast must be non-negative, got {self.contrast}")
        if len(self.drift) != 2:
            raise ConfigurationError(f"drift must be (dy, dx), got {self.drift}")


def moire_pattern(params: MoireParams, height: int, width: int, frame: int = 0) -> torch.Tensor:
    """The raw pattern m in [0, 1] for one frame, shape (H, W), float64."""
    params.validate()
    rng = np.random.default_rng(params.seed)
    base_angle = rng.uniform(0.0, math.pi)
    psi1, psi2 = rng.uniform(0.0, 2 * math.pi, size=2)

    dy, dx = params.drift
    ys = torch.arange(height, dtype=torch.float64).view(height, 1) - frame * dy
    xs = torch.arange(width, dtype=torch.float64).view(1, width) - frame * dx

    def grating(freq, angle, psi):
        proj = xs * math.cos(angle) + ys * math.sin(angle)
        return torch.sin(2 * math.pi * freq * proj + psi)

    g1 = grating(params.f1, base_angle, psi1)
    g2 = grating(params.f2, base_angle + params.theta, psi2)
    return (1.0 + g1 * g2) / 2.0


def synthesize_moire(clean_clip: torch.Tensor, params: MoireParams):
    """Contaminate a clean clip; returns (moire_clip, clean_clip).

    clean_clip: (T, 3, H, W) in [0, 1]. Deterministic given params.seed.
    """
    params.validate()
    clip = torch.as_tensor(clean_clip)
    if clip.dim() != 4 or clip.shape[1] != 3:
        raise ShapeError(f"expected (T, 3, H, W), got {tuple(clip.shape)}")
    if clip.min() < 0 or clip.max() > 1:
        raise ConfigurationError("clean clip values must lie in [0, 1]")
    t, _, h, w = clip.shape
    gains = torch.tensor(params.gains, dtype=torch.float64).view(1, 3, 1, 1)
    frames = []
    for i in range(t):
        m = moire_pattern(params, h, w, frame=i).view(1, 1, h, w)
        weight = (gains * params.contrast * m).clamp(0.0, 1.0)
        out = clip[i : i + 1].to(torch.float64) * (1.0 - weight) + weight * m
        frames.append(out.clamp(0.0, 1.0))
    moire = torch.cat(frames, dim=0).to(clip.dtype if clip.is_floating_point() else torch.float32)
    return moire, clip


def beat_period(f: float, theta: float) -> float:
    """Closed-form beat period of two equal-frequency gratings."""
    return 1.0 / (2.0 * f * math.sin(theta / 2.0))


# ---------------------------------------------------------------------------
# Procedural clean content

def _render_text(size: int, rng: np.random.Generator) -> np.ndarray:
    bg = rng.uniform(0.75, 1.0)
    img = Image.new("RGB", (size, size), tuple(int(bg * 255) for _ in range(3)))
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"
    n_lines = max(3, size // 20)
    for _ in range(n_lines):
        text = "".join(rng.choice(list(alphabet), size=rng.integers(4, 12)))
        xy = (int(rng.integers(0, max(1, size - 40))), int(rng.integers(0, max(1, size - 12))))
        shade = int(rng.uniform(0.0, 0.35) * 255)
        draw.text(xy, text, fill=(shade, shade, shade), font=font)
    return np.asarray(img, dtype=np.float32) / 255.0


def _render_gradient(size: int, rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(0, 2 * math.pi)
    c0 = rng.uniform(0.0, 1.0, size=3)
    c1 = rng.uniform(0.0, 1.0, size=3)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32) / max(size - 1, 1)
    ramp = xs * math.cos(angle) + ys * math.sin(angle)
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-8)
    img = c0[None, None, :] * (1 - ramp[..., None]) + c1[None, None, :] * ramp[..., None]
    return img.astype(np.float32)


def _render_checkerboard(size: int, rng: np.random.Generator) -> np.ndarray:
    cell = int(rng.integers(6, 24))
    c0 = rng.uniform(0.0, 1.0, size=3)
    c1 = rng.uniform(0.0, 1.0, size=3)
    ys, xs = np.mgrid[0:size, 0:size]
    mask = ((ys // cell + xs // cell) % 2).astype(np.float32)[..., None]
    img = c0[None, None, :] * (1 - mask) + c1[None, None, :] * mask
    return img.astype(np.float32)


_CONTENT_RENDERERS = (
    ("text", _render_text),
    ("gradient", _render_gradient),
    ("checkerboard", _render_checkerboard),
)


def save_png(path, img: torch.Tensor) -> None:
    """Write a (3, H, W) tensor in [0, 1] as an 8-bit PNG."""
    arr = (img.detach().clamp(0, 1).numpy() * 255.0).round().astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0)).save(path)


def _random_params(rng: np.random.Generator) -> MoireParams:
    return MoireParams(
        f1=float(rng.uniform(0.08, 0.35)),
        f2=float(rng.uniform(0.08, 0.35)),
        theta=float(rng.uniform(0.05, 0.5)),
        gains=tuple(float(g) for g in rng.uniform(0.4, 1.0, size=3)),
        contrast=float(rng.uniform(0.5, 0.9)),
        drift=(float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2))),
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def make_synthetic_benchmark(
    root,
    n_sequences: int,
    frames_per_seq: int = 5,
    size: int = 128,
    seed: int = 0,
    split: str = "train",
) -> Path:
    """Render aligned (contaminated, clean) sequences under ``root``.

    Content cycles through text, gradient, and checkerboard renderings;
    per-sequence pattern parameters are drawn from ``seed``. Returns the
    dataset root. The result is ingestable by `load_dataset`.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    manifest = {"seed": seed, "split": split, "size": size, "sequences": []}
    for i in range(n_sequences):
        name, renderer = _CONTENT_RENDERERS[i % len(_CONTENT_RENDERERS)]
        content = renderer(size, rng)  # (H, W, 3)
        clean = torch.from_numpy(content.transpose(2, 0, 1)).unsqueeze(0)
        clean = clean.repeat(frames_per_seq, 1, 1, 1)
        params = _random_params(rng)
        moire, clean = synthesize_moire(clean, params)

        seq_id = f"seq_{i:03d}"
        seq_dir = root / split / seq_id
        (seq_dir / "moire").mkdir(parents=True, exist_ok=True)
        (seq_dir / "gt").mkdir(parents=True, exist_ok=True)
        for t in range(frames_per_seq):
            save_png(seq_dir / "moire" / f"{t:05d}.png", moire[t])
            save_png(seq_dir / "gt" / f"{t:05d}.png", clean[t])
        manifest["sequences"].append(
            {"id": seq_id, "content": name, "frames": frames_per_seq, "params": asdict(params)}
        )
    with open(root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return root


# ---------------------------------------------------------------------------
# Ingestion

@dataclass
class FrameTriplet:
    """Three consecutive contaminated frames plus the middle clean frame."""

    frames: torch.Tensor     # (3, 3, H, W) in [0, 1]
    target: torch.Tensor     # (3, H, W) in [0, 1]
    sequence: str
    index: int


@dataclass
class DatasetSpec:
    root: str | Path
    split: str = "train"
    mode: str = "triplet"        # "triplet" | "single"
    crop: int = 384              # 0 disables cropping
    batch: int = 8
    seed: int = 0
    edge_policy: str = "interior"   # "interior" | "replicate"

    def validate(self) -> None:
        if self.mode not in ("triplet", "single"):
            raise ConfigurationError(f"mode must be 'triplet' or 'single', got {self.mode!r}")
        if self.edge_policy not in ("interior", "replicate"):
            raise ConfigurationError(f"unknown edge policy {self.edge_policy!r}")
        if self.crop < 0 or self.batch < 1:
            raise ConfigurationError("crop must be >= 0 and batch >= 1")


def _load_png(path: Path, sequence: str, index: int) -> torch.Tensor:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as exc:
        raise IngestionError(f"sequence {sequence}, frame {index}: cannot read {path} ({exc})")
    return torch.from_numpy(arr.transpose(2, 0, 1))


class TripletDataset:
    """Index over the valid triplet centers of an on-disk dataset."""

    def __init__(self, spec: DatasetSpec):
        spec.validate()
        self.spec = spec
        split_dir = Path(spec.root) / spec.split
        if not split_dir.is_dir():
            raise IngestionError(f"no split directory at {split_dir}")
        self.sequences = {}
        for seq_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            moire_dir, gt_dir = seq_dir / "moire", seq_dir / "gt"
            if not moire_dir.is_dir() or not gt_dir.is_dir():
                raise IngestionError(f"sequence {seq_dir.name}: missing moire/ or gt/ folder")
            moire_files = sorted(p.name for p in moire_dir.glob("*.png"))
            gt_files = sorted(p.name for p in gt_dir.glob("*.png"))
            if moire_files != gt_files:
                odd = sorted(set(moire_files) ^ set(gt_files))
                raise IngestionError(
                    f"sequence {seq_dir.name}: unpaired frames {odd[:4]}"
                )
            if not moire_files:
                raise IngestionError(f"sequence {seq_dir.name}: no frames")
            self.sequences[seq_dir.name] = (seq_dir, moire_files)

        self.centers = []
        for name, (_, files) in self.sequences.items():
            n = len(files)
            if spec.edge_policy == "interior":
                lo, hi = 1, n - 1
            else:
                lo, hi = 0, n
            self.centers.extend((name, t) for t in range(lo, hi))
        if not self.centers:
            raise IngestionError(
                f"no valid triplet centers under {split_dir} "
                f"(edge_policy={spec.edge_policy})"
            )

    def __len__(self) -> int:
        return len(self.centers)

    def load_triplet(self, item: int, crop_origin=None) -> FrameTriplet:
        name, center = self.centers[item]
        seq_dir, files = self.sequences[name]
        n = len(files)
        if self.spec.mode == "single":
            indices = [center] * 3
        else:
            indices = [max(0, center - 1), center, min(n - 1, center + 1)]
        frames = [
            _load_png(seq_dir / "moire" / files[t], name, t) for t in indices
        ]
        target = _load_png(seq_dir / "gt" / files[center], name, center)
        shapes = {f.shape for f in frames} | {target.shape}
        if len(shapes) != 1:
            raise IngestionError(f"sequence {name}: inconsistent frame shapes {shapes}")
        stack = torch.stack(frames)
        c = self.spec.crop
        if c:
            h, w = stack.shape[-2:]
            if c > min(h, w):
                raise ConfigurationError(f"crop {c} exceeds frame size ({h}, {w})")
            if crop_origin is None:
                crop_origin = (0, 0)
            top, left = crop_origin
            stack = stack[..., top : top + c, left : left + c]
            target = target[..., top : top + c, left : left + c]
        return FrameTriplet(stack, target, name, center)


def load_dataset(spec: DatasetSpec, infinite: bool = False, shuffle: bool = True):
    """Yield batches of `spec.batch` triplets as (frames, targets, metas).

    frames: (B, 3, 3, h, w); targets: (B, 3, h, w). Order and crop windows
    are fully determined by spec.seed. With ``infinite`` the iterator loops
    forever (for training); otherwise it makes one pass, final short batch
    included.
    """
    ds = TripletDataset(spec)
    rng = np.random.default_rng(spec.seed)
    while True:
        order = rng.permutation(len(ds)) if shuffle else np.arange(len(ds))
        for start in range(0, len(order), spec.batch):
            items = order[start : start + spec.batch]
            triplets = []
            for i in items:
                origin = None
                if spec.crop:
                    name, center = ds.centers[i]
                    seq_dir, files = ds.sequences[name]
                    with Image.open(seq_dir / "gt" / files[center]) as im:
                        w, h = im.size
                    if spec.crop > min(h, w):
                        raise ConfigurationError(
                            f"crop {spec.crop} exceeds frame size ({h}, {w})"
                        )
                    origin = (
                        int(rng.integers(0, h - spec.crop + 1)),
                        int(rng.integers(0, w - spec.crop + 1)),
                    )
                triplets.append(ds.load_triplet(int(i), crop_origin=origin))
            frames = torch.stack([t.frames for t in triplets])
            targets = torch.stack([t.target for t in triplets])
            metas = [(t.sequence, t.index) for t in triplets]
            yield frames, targets, metas
        if not infinite:
            return
