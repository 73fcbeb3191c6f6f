"""Full restoration network: three-frame encoder-decoder with post alignment.

Geometry: a shared encoder produces per-frame pyramids at scales x1, x1/2,
x1/4 with widths (C, 2C, 4C); a bottleneck of fusion blocks processes the
reference frame's deepest feature; the decoder walks back up, at each stage
aligning the neighbor-frame features against the reference and fusing them
(plus the reference encoder skip) into the stream before its own fusion
blocks. A final 3x3 convolution predicts an RGB correction that is added to
the input middle frame; auxiliary heads emit predictions at x1/2 and x1/4
for multi-scale supervision.

Conventions: inputs are RGB in [0, 1], shape (B, T, 3, H, W) with T equal to
``input_frames``; arbitrary H, W are handled by reflect-padding to a
multiple of 8 and cropping back. Outputs are clamped to [0, 1] in eval mode
only, so training losses see the raw values.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .alignment import PostAlignModule, default_deform_groups
from .blocks import FrequencySpatialFusionBlock, crop_to, pad_to_multiple
from .errors import CheckpointMismatchError, ConfigurationError, InvalidInputError, ShapeError

CHECKPOINT_VERSION = 1
PAD_MULTIPLE = 8


@dataclass
class ModelConfig:
    """Architecture hyperparameters and ablation switches."""

    base_width: int = 64
    encoder_blocks: tuple[int, int, int] = (2, 2, 4)
    bottleneck_blocks: int = 12
    use_amp_phase: bool = True
    use_fsm: bool = True
    use_csfm: bool = True
    use_pam: bool = True
    align_target: str = "neighbor"
    input_frames: int = 3
    in_channels: int = 3
    expansion: int = 2

    def __post_init__(self):
        self.encoder_blocks = tuple(self.encoder_blocks)

    def validate(self) -> None:
        if self.base_width < 1:
            raise ConfigurationError(f"base_width must be positive, got {self.base_width}")
        if len(self.encoder_blocks) != 3:
            raise ConfigurationError(
                f"encoder_blocks must list 3 stages, got {self.encoder_blocks}"
            )
        if any(n < 1 for n in self.encoder_blocks) or self.bottleneck_blocks < 1:
            raise ConfigurationError("block counts must be at least 1")
        if self.use_fsm and not self.use_amp_phase:
            raise ConfigurationError(
                "the selective fusion stage requires the amplitude/phase branch"
            )
        if self.align_target not in ("neighbor", "reference"):
            raise ConfigurationError(f"unknown align_target {self.align_target!r}")
        if self.input_frames not in (1, 3):
            raise ConfigurationError(f"input_frames must be 1 or 3, got {self.input_frames}")
        if self.in_channels < 1 or self.expansion < 1:
            raise ConfigurationError("in_channels and expansion must be positive")

    def stage_widths(self) -> tuple[int, int, int]:
        c = self.base_width
        return (c, 2 * c, 4 * c)

    def block_switches(self) -> dict:
        return {
            "use_amp_phase": self.use_amp_phase,
            "use_fsm": self.use_fsm,
            "use_csfm": self.use_csfm,
            "expansion": self.expansion,
        }


def _fusion_stack(width: int, count: int, cfg: ModelConfig) -> nn.Sequential:
    return nn.Sequential(
        *[FrequencySpatialFusionBlock(width, **cfg.block_switches()) for _ in range(count)]
    )


class Encoder(nn.Module):
    """Shared per-frame feature pyramid: entry conv, three block stages,
    strided 3x3 downsampling between stages."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        widths = cfg.stage_widths()
        self.entry = nn.Conv2d(cfg.in_channels, widths[0], 3, padding=1)
        self.stages = nn.ModuleList(
            _fusion_stack(w, n, cfg) for w, n in zip(widths, cfg.encoder_blocks)
        )
        self.downs = nn.ModuleList(
            nn.Conv2d(widths[s], widths[s + 1], 3, stride=2, padding=1) for s in range(2)
        )

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        y = self.entry(x)
        for s, stage in enumerate(self.stages):
            y = stage(y)
            feats.append(y)
            if s < len(self.downs):
                y = self.downs[s](y)
        return feats


class Decoder(nn.Module):
    """Deep-to-shallow decoding with per-stage alignment and skip fusion.

    Stage order is deepest first. When alignment is disabled the stage
    consumes the incoming decoder stream unchanged (no neighbor or skip
    information enters), which keeps the output bit-invariant to neighbor
    frames.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        widths = cfg.stage_widths()[::-1]
        counts = cfg.encoder_blocks[::-1]
        self.use_pam = cfg.use_pam
        if cfg.use_pam:
            pams = []
            prev_groups = None
            for w in widths:
                pams.append(
                    PostAlignModule(
                        w,
                        deform_groups=default_deform_groups(w),
                        prev_deform_groups=prev_groups,
                        with_skip=True,
                        align_target=cfg.align_target,
                    )
                )
                prev_groups = pams[-1].deform_groups
            self.pams = nn.ModuleList(pams)
        else:
            self.pams = None
        self.stages = nn.ModuleList(
            _fusion_stack(w, n, cfg) for w, n in zip(widths, counts)
        )
        self.ups = nn.ModuleList(
            nn.Conv2d(widths[s], widths[s + 1], 1) for s in range(2)
        )
        self.aux_heads = nn.ModuleList(
            nn.Conv2d(w, cfg.in_channels, 3, padding=1) for w in widths[:2]
        )
        self.final = nn.Conv2d(widths[-1], cfg.in_channels, 3, padding=1)

    def forward(self, bottleneck, pyramids):
        """pyramids: (feats_prev, feats_ref, feats_next), each a 3-level list
        ordered shallow to deep. Returns (correction, [aux_deep, aux_mid])."""
        feats_prev, feats_ref, feats_next = pyramids
        y = bottleneck
        aux = []
        offsets = None
        for s in range(3):
            level = 2 - s
            if self.pams is not None:
                y, offsets = self.pams[s](
                    y,
                    feats_prev[level],
                    feats_ref[level],
                    feats_next[level],
                    skip=feats_ref[level],
                    prev_offsets=offsets,
                )
            y = self.stages[s](y)
            if s < 2:
                aux.append(self.aux_heads[s](y))
                y = self.ups[s](
                    F.interpolate(y, scale_factor=2, mode="bilinear", align_corners=False)
                )
        return self.final(y), [aux[0], aux[1]]


class VideoDemoireNet(nn.Module):
    """End-to-end network mapping a frame triplet to the restored middle frame."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        widths = config.stage_widths()
        self.encoder = Encoder(config)
        self.bottleneck = _fusion_stack(widths[-1], config.bottleneck_blocks, config)
        self.decoder = Decoder(config)

    def _check_input(self, frames: torch.Tensor) -> torch.Tensor:
        if frames.dim() == 4 and self.config.input_frames == 1:
            frames = frames.unsqueeze(1)
        if frames.dim() != 5:
            raise ShapeError(f"expected (B, T, C, H, W), got {tuple(frames.shape)}")
        b, t, c, h, w = frames.shape
        if t != self.config.input_frames:
            raise ShapeError(
                f"expected {self.config.input_frames} frames, got {t}"
            )
        if c != self.config.in_channels:
            raise ShapeError(f"expected {self.config.in_channels} channels, got {c}")
        if not torch.isfinite(frames).all():
            raise InvalidInputError("input frames contain NaN or Inf")
        return frames

    def forward(self, frames: torch.Tensor, return_aux: bool = False):
        """frames: (B, T, 3, H, W) in [0, 1]. Returns the restored middle
        frame (B, 3, H, W); with ``return_aux`` also the x1/2 and x1/4
        predictions (in that order)."""
        frames = self._check_input(frames)
        if frames.shape[1] == 1:
            frames = frames.expand(-1, 3, -1, -1, -1)
        b, t, c, h, w = frames.shape
        reference = frames[:, 1]

        flat, _, _ = pad_to_multiple(frames.reshape(b * t, c, h, w), PAD_MULTIPLE)
        feats = self.encoder(flat)
        pyramids = [
            [level.reshape(b, t, *level.shape[1:])[:, i] for level in feats]
            for i in range(t)
        ]
        deep_ref = pyramids[1][-1]
        mid = self.bottleneck(deep_ref)
        correction, aux_raw = self.decoder(mid, pyramids)

        out = crop_to(correction, h, w) + reference
        aux = []
        for raw, div in zip(aux_raw, (4, 2)):
            ah, aw = (h + div - 1) // div, (w + div - 1) // div
            base = F.interpolate(reference, size=(ah, aw), mode="bilinear", align_corners=False)
            aux.append(crop_to(raw, ah, aw) + base)
        aux = aux[::-1]

        if not self.training:
            out = out.clamp(0.0, 1.0)
            aux = [a.clamp(0.0, 1.0) for a in aux]
        return (out, aux) if return_aux else out


def parameter_census(model: nn.Module) -> dict[str, int]:
    """Parameter counts per component family, keyed by submodule name."""
    census = {"fsm": 0, "csfm": 0, "pam": 0, "core": 0}
    for name, p in model.named_parameters():
        parts = name.split(".")
        if "fsm" in parts:
            census["fsm"] += p.numel()
        elif "csfm" in parts:
            census["csfm"] += p.numel()
        elif "pams" in parts:
            census["pam"] += p.numel()
        else:
            census["core"] += p.numel()
    census["total"] = sum(census.values())
    return census


def save_model(path, model: VideoDemoireNet, extra: dict | None = None) -> None:
    """Write a versioned checkpoint: config, weights, optional harness state."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "state_dict": model.state_dict(),
    }
    if extra:
        overlap = set(extra) & set(payload)
        if overlap:
            raise ConfigurationError(f"extra keys collide with checkpoint fields: {overlap}")
        payload.update(extra)
    torch.save(payload, path)


def load_payload(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or "version" not in payload:
        raise CheckpointMismatchError(f"{path}: missing mandatory version field")
    if payload["version"] != CHECKPOINT_VERSION:
        raise CheckpointMismatchError(
            f"{path}: version {payload['version']} is not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    return payload


def load_model(path) -> tuple[VideoDemoireNet, dict]:
    """Rebuild a model from a checkpoint; returns (model, full payload).

    Raises CheckpointMismatchError when the stored weights do not line up
    with the architecture implied by the stored config.
    """
    payload = load_payload(path)
    try:
        config = ModelConfig(**payload["model_config"])
    except (KeyError, TypeError) as exc:
        raise CheckpointMismatchError(f"{path}: bad model_config ({exc})") from exc
    model = VideoDemoireNet(config)
    missing, unexpected = model.load_state_dict(payload["state_dict"], strict=False)
    if missing or unexpected:
        raise CheckpointMismatchError(
            f"{path}: state dict mismatch; missing={sorted(missing)[:4]} "
            f"unexpected={sorted(unexpected)[:4]}"
        )
    return model, payload
