"""Training, evaluation, ablation, and the amplitude/phase swap demo.

Training follows a fixed recipe: decoupled-weight-decay adaptive-moment
optimizer (decay only on rank >= 2 parameters), a closed-form cyclic cosine
schedule with warm restarts, global-norm gradient clipping, and periodic
versioned checkpoints. A non-finite loss aborts the run, keeping the last
good checkpoint and dumping the offending batch for diagnosis.

Resumption restores model, optimizer, iteration, and RNG state, and
fast-forwards the seeded data stream to the stored iteration, so train(N)
and train(k) + resume + train(N-k) produce identical parameters for a fixed
data order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import yaml

from .backbones import RandomVideoEmbedder, load_feature_extractor
from .data import DatasetSpec, load_dataset, save_png
from .errors import ConfigurationError, ShapeError, TrainingDivergedError
from .frequency import swap_components
from .losses import LossWeights, total_loss
from .metrics import (
    MetricsReport, color_histogram_correlation, fsim, fvd, lpips, psnr, ssim, y_psnr,
)
from .model import ModelConfig, VideoDemoireNet, load_model, save_model

logger = logging.getLogger(__name__)

DEFAULT_METRICS = ("psnr", "ssim", "fsim", "y_psnr", "hist_corr")
OPTIONAL_METRICS = ("lpips", "fvd")


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DatasetSpec = field(default_factory=lambda: DatasetSpec(root="data"))
    loss: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-3
    lr_min: float = 1e-6
    weight_decay: float = 1e-4
    restart_period: int = 10_000
    restart_mult: int = 1
    max_iters: int = 10_000
    seed: int = 0
    grad_clip: float = 1.0
    checkpoint_every: int = 1_000
    log_every: int = 50
    out_dir: str = "runs/default"
    extractor_weights: str | None = None
    raw_phase_l1: bool = False

    def validate(self) -> None:
        self.model.validate()
        self.loss.validate()
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.lr_min < 0 or self.lr_min > self.lr:
            raise ConfigurationError(f"lr_min must lie in [0, lr], got {self.lr_min}")
        if self.restart_period < 1 or self.restart_mult < 1:
            raise ConfigurationError("restart period must be >= 1 and multiplier >= 1")
        if self.max_iters < 1 or self.checkpoint_every < 1 or self.log_every < 1:
            raise ConfigurationError("iteration counts must be positive")
        if self.weight_decay < 0 or self.grad_clip < 0:
            raise ConfigurationError("weight_decay and grad_clip must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["data"]["root"] = str(d["data"]["root"])
        return d


def config_from_dict(raw: dict) -> TrainConfig:
    raw = dict(raw)
    model = ModelConfig(**raw.pop("model", {}))
    data = DatasetSpec(**raw.pop("data", {"root": "data"}))
    loss = LossWeights(**raw.pop("loss", {}))
    return TrainConfig(model=model, data=data, loss=loss, **raw)


def config_fingerprint(cfg: TrainConfig, ignore_switches: bool = False) -> str:
    """Stable hash of the full configuration; with ``ignore_switches`` the
    ablation switches are masked out, so controlled runs can assert that
    nothing else differs."""
    d = cfg.to_dict()
    if ignore_switches:
        for k in ("use_amp_phase", "use_fsm", "use_csfm", "use_pam"):
            d["model"][k] = None
        d["out_dir"] = None
    blob = json.dumps(d, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_resolved_config(payload: dict, out_dir, name: str = "resolved_config.yaml") -> Path:
    """Every run records the exact configuration next to its outputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w") as fh:
        yaml.safe_dump(payload, fh, sort_keys=True)
    return path


def warm_restart_lr(iteration: int, lr_max: float, lr_min: float, period: int, t_mult: int = 1) -> float:
    """Cosine annealing with warm restarts, evaluated in closed form.

    lr(0) = lr_max at every restart; lr at mid-cycle is the midpoint
    lr_min + 0.5 (lr_max - lr_min); cycle lengths grow by t_mult.
    """
    if iteration < 0:
        raise ConfigurationError(f"iteration must be non-negative, got {iteration}")
    if t_mult == 1:
        t = iteration % period
        cur = period
    else:
        n = int(math.log(iteration * (t_mult - 1) / period + 1, t_mult))
        start = period * (t_mult**n - 1) // (t_mult - 1)
        if start > iteration:
            n -= 1
            start = period * (t_mult**n - 1) // (t_mult - 1)
        t = iteration - start
        cur = period * t_mult**n
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / cur))


def build_optimizer(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.AdamW:
    """Decoupled weight decay on rank >= 2 parameters only (biases and gain
    vectors are excluded)."""
    decay = [p for p in model.parameters() if p.requires_grad and p.ndim > 1]
    no_decay = [p for p in model.parameters() if p.requires_grad and p.ndim <= 1]
    return torch.optim.AdamW(
        [
            {"params": decay, "weight_decay": cfg.weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ],
        lr=cfg.lr,
    )


@dataclass
class TrainResult:
    checkpoint: Path
    log: list
    out_dir: Path


def train(cfg: TrainConfig, resume: str | Path | None = None, data_iter=None) -> TrainResult:
    """Run the training loop; returns the final checkpoint path and log rows.

    ``data_iter`` overrides the dataset-backed batch stream (used by tests
    and small-scale experiments); it must yield (frames, targets, metas)
    indefinitely and deterministically.
    """
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg.to_dict(), out_dir)
    torch.manual_seed(cfg.seed)

    model = VideoDemoireNet(cfg.model)
    model.train()
    optimizer = build_optimizer(model, cfg)
    extractor = None
    if cfg.loss.lambda_p > 0:
        extractor = load_feature_extractor(cfg.extractor_weights, seed=cfg.seed)

    start_iter = 0
    last_ckpt = None
    if resume is not None:
        restored, payload = load_model(resume)
        if asdict(restored.config) != asdict(cfg.model):
            raise ConfigurationError(
                "checkpoint model config does not match the training config"
            )
        model.load_state_dict(restored.state_dict())
        optimizer.load_state_dict(payload["optimizer"])
        start_iter = payload["iteration"]
        torch.set_rng_state(payload["torch_rng"])
        last_ckpt = Path(resume)

    if data_iter is None:
        data_iter = load_dataset(cfg.data, infinite=True)
    for _ in range(start_iter):  # fast-forward the seeded stream on resume
        next(data_iter)

    def save(iteration: int, tag: str) -> Path:
        path = out_dir / f"ckpt_{tag}.pt"
        save_model(
            path,
            model,
            extra={
                "optimizer": optimizer.state_dict(),
                "iteration": iteration,
                "torch_rng": torch.get_rng_state(),
                "train_config": cfg.to_dict(),
            },
        )
        return path

    log_rows = []
    log_path = out_dir / "train_log.jsonl"
    log_fh = open(log_path, "a")
    try:
        for it in range(start_iter, cfg.max_iters):
            lr = warm_restart_lr(it, cfg.lr, cfg.lr_min, cfg.restart_period, cfg.restart_mult)
            for group in optimizer.param_groups:
                group["lr"] = lr

            frames, targets, metas = next(data_iter)
            pred, aux = model(frames, return_aux=True)
            loss, breakdown = total_loss(
                [pred, *aux], targets, cfg.loss, extractor, raw_phase_l1=cfg.raw_phase_l1
            )
            if not torch.isfinite(loss):
                dump = out_dir / "diverged_batch.pt"
                torch.save(
                    {"iteration": it, "frames": frames, "targets": targets,
                     "metas": metas, "breakdown": breakdown},
                    dump,
                )
                raise TrainingDivergedError(
                    f"non-finite loss at iteration {it}; offending batch dumped to "
                    f"{dump}; last good checkpoint: {last_ckpt}"
                )

            optimizer.zero_grad()
            loss.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()

            row = {"iteration": it, "lr": lr, **breakdown}
            log_rows.append(row)
            if it % cfg.log_every == 0 or it == cfg.max_iters - 1:
                log_fh.write(json.dumps(row) + "\n")
                log_fh.flush()
            if (it + 1) % cfg.checkpoint_every == 0 and (it + 1) < cfg.max_iters:
                last_ckpt = save(it + 1, f"{it + 1:07d}")
    finally:
        log_fh.close()

    final = save(cfg.max_iters, "final")
    return TrainResult(checkpoint=final, log=log_rows, out_dir=out_dir)


# ---------------------------------------------------------------------------
# Evaluation

def _resolve_metrics(selection) -> tuple:
    if selection is None:
        return DEFAULT_METRICS
    if isinstance(selection, str):
        selection = tuple(s.strip() for s in selection.split(",") if s.strip())
    known = set(DEFAULT_METRICS) | set(OPTIONAL_METRICS)
    bad = [s for s in selection if s not in known]
    if bad:
        raise ConfigurationError(f"unknown metrics {bad}; known: {sorted(known)}")
    return tuple(selection)


def evaluate(
    model: VideoDemoireNet,
    spec: DatasetSpec,
    metrics=None,
    backbone=None,
    embedder=None,
    out_dir: str | Path | None = None,
    save_images: bool = False,
) -> MetricsReport:
    """Forward every valid triplet center and score the restorations.

    Per-frame rows carry the selected metrics plus the contaminated-input
    baseline PSNR. The distribution-level video score compares restored
    sequences against clean ones and needs at least two sequences.
    """
    selection = _resolve_metrics(metrics)
    model.eval()
    report = MetricsReport()
    if "lpips" in selection and backbone is None:
        backbone = load_feature_extractor()
    if "fvd" in selection and embedder is None:
        embedder = RandomVideoEmbedder()
    for dep in (backbone, embedder):
        if dep is not None and not getattr(dep, "pretrained", False):
            report.comparable = False

    by_sequence: dict[str, list] = {}
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        spec_dict = asdict(spec)
        spec_dict["root"] = str(spec_dict["root"])
        write_resolved_config(
            {"data": spec_dict, "metrics": list(selection)},
            out_path,
            name="resolved_eval.yaml",
        )

    with torch.no_grad():
        for frames, targets, metas in load_dataset(spec, infinite=False, shuffle=False):
            preds = model(frames)
            for i, (seq, idx) in enumerate(metas):
                pred, target = preds[i], targets[i]
                row = {"sequence": seq, "index": idx}
                if "psnr" in selection:
                    row["psnr"] = psnr(pred, target)
                if "ssim" in selection:
                    row["ssim"] = ssim(pred, target)
                if "fsim" in selection:
                    row["fsim"] = fsim(pred, target)
                if "y_psnr" in selection:
                    row["y_psnr"] = y_psnr(pred, target)
                if "hist_corr" in selection:
                    row["hist_corr"] = color_histogram_correlation(
                        pred.clamp(0, 1), target.clamp(0, 1)
                    )
                if "lpips" in selection:
                    row["lpips"] = lpips(pred, target, backbone)
                row["input_psnr"] = psnr(frames[i, 1], target)
                report.add_frame(**row)
                by_sequence.setdefault(seq, []).append((idx, pred, target))
                if save_images and out_path is not None:
                    save_png(out_path / f"{seq}_{idx:05d}_restored.png", pred.clamp(0, 1))

    if "fvd" in selection:
        if len(by_sequence) >= 2:
            emb_pred, emb_gt = [], []
            for seq, rows in sorted(by_sequence.items()):
                rows.sort(key=lambda r: r[0])
                video_pred = torch.stack([r[1] for r in rows])
                video_gt = torch.stack([r[2] for r in rows])
                emb_pred.append(embedder(video_pred).numpy())
                emb_gt.append(embedder(video_gt).numpy())
            report.per_sequence["fvd"] = fvd(np.stack(emb_pred), np.stack(emb_gt))
        else:
            logger.warning("distribution-level video score needs >= 2 sequences; skipped")
    return report


def evaluate_checkpoint(ckpt_path, spec: DatasetSpec, **kwargs) -> MetricsReport:
    model, _ = load_model(ckpt_path)
    return evaluate(model, spec, **kwargs)


# ---------------------------------------------------------------------------
# Amplitude/phase swap demo

def demo_swap(image_a, image_b, out_dir) -> dict:
    """Cross-combine the spectra of two same-size images and write both
    results as PNGs; returns the output paths and fidelity of each swap
    against the amplitude donor."""
    from PIL import Image

    def load(p):
        with Image.open(p) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        return torch.from_numpy(arr.transpose(2, 0, 1))

    a, b = load(image_a), load(image_b)
    if a.shape != b.shape:
        raise ShapeError(f"images differ in size: {tuple(a.shape)} vs {tuple(b.shape)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    amp_a_phase_b = swap_components(a, b).clamp(0, 1)
    amp_b_phase_a = swap_components(b, a).clamp(0, 1)
    path_ab = out_dir / "amp_a_phase_b.png"
    path_ba = out_dir / "amp_b_phase_a.png"
    save_png(path_ab, amp_a_phase_b)
    save_png(path_ba, amp_b_phase_a)
    result = {
        "amp_a_phase_b": str(path_ab),
        "amp_b_phase_a": str(path_ba),
        "psnr_ab_vs_a": psnr(amp_a_phase_b, a),
        "psnr_ba_vs_a": psnr(amp_b_phase_a, a),
    }
    logger.info("swap demo: %s", result)
    return result


# ---------------------------------------------------------------------------
# Ablation

ABLATION_SWITCHES = {
    1: dict(use_amp_phase=False, use_fsm=False, use_csfm=False, use_pam=False),
    2: dict(use_amp_phase=False, use_fsm=False, use_csfm=True, use_pam=True),
    3: dict(use_amp_phase=True, use_fsm=False, use_csfm=True, use_pam=True),
    4: dict(use_amp_phase=True, use_fsm=True, use_csfm=False, use_pam=True),
    5: dict(use_amp_phase=True, use_fsm=True, use_csfm=True, use_pam=False),
    6: dict(use_amp_phase=True, use_fsm=True, use_csfm=True, use_pam=True),
}


def ablation_config(base: TrainConfig, model_id: int) -> TrainConfig:
    """Base config with only the variant's switches (and out_dir) changed."""
    if model_id not in ABLATION_SWITCHES:
        raise ConfigurationError(f"model id must be in 1..6, got {model_id}")
    model = replace(base.model, **ABLATION_SWITCHES[model_id])
    out = str(Path(base.out_dir) / f"model_{model_id}")
    return replace(base, model=model, out_dir=out)


def ablate(base: TrainConfig, model_id: int, data_iter=None, eval_spec=None) -> dict:
    """Train one ablation variant and score it; returns a result row."""
    cfg = ablation_config(base, model_id)
    result = train(cfg, data_iter=data_iter)
    model, _ = load_model(result.checkpoint)
    spec = eval_spec if eval_spec is not None else replace(cfg.data, crop=0)
    report = evaluate(model, spec, metrics=("psnr",))
    agg = report.aggregate()
    return {
        "model_id": model_id,
        "switches": ABLATION_SWITCHES[model_id],
        "fingerprint": config_fingerprint(cfg, ignore_switches=True),
        "checkpoint": str(result.checkpoint),
        "psnr_mean": agg["psnr"][0],
        "input_psnr_mean": agg["input_psnr"][0],
        "report": report,
        "out_dir": str(result.out_dir),
    }
