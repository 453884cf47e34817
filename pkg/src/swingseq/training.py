"""Class-weighted training loop, learning-rate schedule and ablation runner."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import NUM_CLASSES, ConfigurationError, SplitAssignment, SwingAnnotation
from .preprocess import AugmentParams, FrameSource, sample_training_window, window_rng

log = logging.getLogger(__name__)

EPS = 1e-12
DEFAULT_CLASS_WEIGHTS = (1.0,) * 8 + (0.1,)


@dataclass
class TrainConfig:
    batch_size: int = 4
    iterations: int = 1000
    lr_initial: float = 1e-3
    lr_drop_iteration: int | None = None
    lr_drop_factor: float = 10.0
    class_weights: tuple[float, ...] = DEFAULT_CLASS_WEIGHTS
    augment: AugmentParams = field(default_factory=lambda: AugmentParams(enabled=False))
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        self.class_weights = tuple(float(w) for w in self.class_weights)
        if len(self.class_weights) != NUM_CLASSES or min(self.class_weights) <= 0:
            raise ConfigurationError("class_weights must be 9 positive values")
        if self.iterations < 0 or self.batch_size < 1:
            raise ConfigurationError("iterations must be >= 0 and batch_size >= 1")


@dataclass
class TrainReport:
    loss_curve: list[float]
    checkpoint: dict
    wall_time_s: float

    def smoothed(self, window: int = 20) -> np.ndarray:
        curve = np.asarray(self.loss_curve, dtype=float)
        if len(curve) < window:
            return curve
        return np.convolve(curve, np.ones(window) / window, mode="valid")

    def curve_csv(self) -> str:
        return "iteration,loss\n" + "".join(f"{i + 1},{v:.6f}\n" for i, v in enumerate(self.loss_curve))


def weighted_cross_entropy(probs, labels, weights=DEFAULT_CLASS_WEIGHTS, eps: float = EPS):
    """Mean over frames of ``weights[label] * -log(probs[frame, label])``.

    Works on numpy arrays (returns a float) or torch tensors (returns a
    differentiable scalar). Probabilities are clamped at ``eps``.
    """
    if torch.is_tensor(probs):
        labels = torch.as_tensor(labels, device=probs.device).reshape(-1)
        w = torch.as_tensor(weights, dtype=probs.dtype, device=probs.device)
        p = probs.reshape(-1, probs.shape[-1]).gather(1, labels[:, None])[:, 0]
        return (w[labels] * -torch.log(p.clamp_min(eps))).mean()
    probs = np.asarray(probs, dtype=np.float64).reshape(-1, np.shape(probs)[-1])
    labels = np.asarray(labels).reshape(-1)
    w = np.asarray(weights, dtype=np.float64)
    p = probs[np.arange(len(labels)), labels]
    return float(np.mean(w[labels] * -np.log(np.maximum(p, eps))))


def weighted_cross_entropy_logits(logits: torch.Tensor, labels: torch.Tensor, weights) -> torch.Tensor:
    """Same loss as :func:`weighted_cross_entropy` computed stably from logits."""
    w = torch.as_tensor(weights, dtype=logits.dtype, device=logits.device)
    flat = logits.reshape(-1, logits.shape[-1])
    labels = labels.reshape(-1)
    nll = F.cross_entropy(flat, labels, reduction="none")
    return (w[labels] * nll).mean()


def learning_rate(cfg: TrainConfig, iteration: int) -> float:
    """Learning rate for 1-based ``iteration``."""
    if cfg.lr_drop_iteration is not None and iteration > cfg.lr_drop_iteration:
        return cfg.lr_initial / cfg.lr_drop_factor
    return cfg.lr_initial


class WindowSampler:
    """Epoch-shuffled batches of looped training windows.

    Each window's randomness comes from (seed, sample_id, epoch), so a batch
    can be rebuilt independently of the order workers produce it in.
    """

    def __init__(self, annotations: Sequence[SwingAnnotation], frames: FrameSource, T: int, d: int,
                 batch_size: int, seed: int = 0, augment: AugmentParams | None = None):
        if not annotations:
            raise ConfigurationError("training corpus is empty")
        self.annotations = list(annotations)
        self.frames = frames
        self.T, self.d, self.batch_size = T, d, batch_size
        self.seed = seed
        self.augment = augment
        self._epoch = -1
        self._queue: list[int] = []
        self._cache: dict = {}

    def _load(self, sample_id):
        if sample_id not in self._cache:
            self._cache[sample_id] = self.frames.load(sample_id)
        return self._cache[sample_id]

    def next_batch(self) -> tuple[torch.Tensor, torch.Tensor]:
        pixels, labels = [], []
        for _ in range(self.batch_size):
            if not self._queue:
                self._epoch += 1
                order = np.random.default_rng([self.seed, self._epoch]).permutation(len(self.annotations))
                self._queue = list(order)
            ann = self.annotations[self._queue.pop(0)]
            rng = window_rng(self.seed, ann.sample_id, self._epoch)
            win = sample_training_window(ann, self._load(ann.sample_id), self.T, rng, d=self.d,
                                         augment_params=self.augment)
            pixels.append(win.pixels)
            labels.append(win.labels)
        return torch.from_numpy(np.stack(pixels)), torch.from_numpy(np.stack(labels))


def train(model, annotations: Sequence[SwingAnnotation], frames: FrameSource, cfg: TrainConfig,
          sample_ids: Sequence[str] | None = None, T: int | None = None) -> TrainReport:
    """Optimize ``model`` with Adam for ``cfg.iterations`` steps.

    ``sample_ids`` restricts training to part of the corpus (e.g. the training
    folds of a split). Window length defaults to the model's configured T.
    """
    t0 = time.perf_counter()
    if sample_ids is not None:
        keep = set(sample_ids)
        annotations = [a for a in annotations if a.sample_id in keep]
    if not annotations:
        raise ConfigurationError("no training samples selected")
    torch.manual_seed(cfg.seed)
    T = T or model.cfg.T
    sampler = WindowSampler(annotations, frames, T, model.cfg.d, cfg.batch_size, cfg.seed, cfg.augment)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=cfg.lr_initial)
    curve = []
    model.train()
    for it in range(1, cfg.iterations + 1):
        for g in opt.param_groups:
            g["lr"] = learning_rate(cfg, it)
        try:
            x, y = sampler.next_batch()
        except OSError as exc:
            raise OSError(f"iteration {it}: failed to load training data: {exc}") from exc
        try:
            loss = weighted_cross_entropy_logits(model(x), y, cfg.class_weights)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
        except RuntimeError as exc:
            raise RuntimeError(f"iteration {it}: {exc}") from exc
        curve.append(loss.item())
        if cfg.log_every and it % cfg.log_every == 0:
            log.info("iter %d loss %.4f (avg %.4f)", it, curve[-1], np.mean(curve[-cfg.log_every:]))
    model.eval()
    checkpoint = {"config": model.cfg.to_dict(), "iteration": cfg.iterations,
                  "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()}}
    return TrainReport(loss_curve=curve, checkpoint=checkpoint, wall_time_s=time.perf_counter() - t0)


# -- ablation ------------------------------------------------------------------

ABLATION_COLUMNS = ("config", "d", "T", "batch", "pretrained", "N", "H", "bidirectional",
                    "params_1e6", "flops_1e9", "pce", "error")


def evaluate_model(model, annotations: Sequence[SwingAnnotation], frames: FrameSource, T: int,
                   f: float | None = None):
    from .evaluation import pce
    from .inference import detect_events, infer_timeline

    detections = [detect_events(infer_timeline(model, frames.load(a.sample_id), a.bbox, T), a.sample_id)
                  for a in annotations]
    return pce(detections, annotations, f)


def run_ablation(grid, annotations: Sequence[SwingAnnotation] = (), frames: FrameSource | None = None,
                 split: SplitAssignment | None = None, fold: int = 0, backbone_weights=None,
                 train_models: bool = True) -> list[dict]:
    """Train and score each (ModelConfig, TrainConfig) pair on one fold.

    Rows carry the analytic parameter and FLOP counts. With
    ``train_models=False`` only those columns are filled. A failing config is
    recorded in its row's ``error`` field and the rest of the grid still runs.
    """
    from .complexity import count_flops, count_params
    from .model import build_model, load_pretrained_backbone

    if not grid:
        raise ConfigurationError("ablation grid is empty")
    rows = []
    for i, (mcfg, tcfg) in enumerate(grid):
        row = {"config": i, "d": mcfg.d, "T": mcfg.T, "batch": tcfg.batch_size, "pretrained": mcfg.pretrained,
               "N": mcfg.lstm_layers, "H": mcfg.lstm_hidden, "bidirectional": mcfg.bidirectional,
               "params_1e6": count_params(mcfg) / 1e6, "flops_1e9": count_flops(mcfg) / 1e9,
               "pce": None, "error": ""}
        if train_models:
            try:
                if split is None or frames is None:
                    raise ConfigurationError("training requires a corpus, frames and a split")
                torch.manual_seed(tcfg.seed)
                model = build_model(mcfg)
                if mcfg.pretrained:
                    if backbone_weights is None:
                        raise ConfigurationError("config requests pretrained weights but none were supplied")
                    load_pretrained_backbone(model, backbone_weights)
                train(model, annotations, frames, tcfg, sample_ids=split.training_ids(fold))
                val_ids = set(split.validation_ids(fold))
                report = evaluate_model(model, [a for a in annotations if a.sample_id in val_ids], frames, mcfg.T)
                row["pce"] = report.overall_pce
            except Exception as exc:  # noqa: BLE001 - recorded per row, grid continues
                log.warning("ablation config %d failed: %s", i, exc)
                row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def ablation_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=ABLATION_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        out = dict(r)
        out["params_1e6"] = f"{r['params_1e6']:.2f}"
        out["flops_1e9"] = f"{r['flops_1e9']:.2f}"
        out["pce"] = "" if r["pce"] is None else f"{r['pce']:.1f}"
        writer.writerow(out)
    return buf.getvalue()

