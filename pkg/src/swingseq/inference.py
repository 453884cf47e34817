"""Full-clip inference with non-overlapping windows and per-event argmax selection."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from .dataset import NUM_EVENTS, atomic_write_text
from .preprocess import center_square_bbox, crop_frames, resize_pad_normalize

TIMELINE_COLUMNS = ("frame", "p_A", "p_TU", "p_MB", "p_T", "p_MD", "p_I", "p_MFT", "p_F", "p_none")


@dataclass
class DetectionResult:
    predicted_frames: list[int]
    confidences: list[float]
    sample_id: str = ""

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "DetectionResult":
        return cls(predicted_frames=[int(v) for v in rec["predicted_frames"]],
                   confidences=[float(v) for v in rec.get("confidences", [0.0] * NUM_EVENTS)],
                   sample_id=str(rec.get("sample_id", "")))


@dataclass(frozen=True)
class Window:
    start: int
    end: int  # exclusive, within the clip
    pad_count: int  # trailing positions filled by repeating the last frame


def sliding_windows(num_frames: int, T: int) -> list[Window]:
    if num_frames < 1 or T < 1:
        raise ValueError("num_frames and T must be >= 1")
    out = []
    for start in range(0, num_frames, T):
        end = min(start + T, num_frames)
        out.append(Window(start, end, T - (end - start)))
    return out


def window_indices(w: Window) -> np.ndarray:
    return np.concatenate([np.arange(w.start, w.end), np.full(w.pad_count, w.end - 1, dtype=np.int64)])


@torch.no_grad()
def infer_timeline(model, frames, bbox: Sequence[float] | None, T: int) -> np.ndarray:
    """Per-frame class probabilities for a whole clip, shape (num_frames, C).

    ``frames`` is a FrameSequence or (N, H, W, 3) array. Without a bbox the
    central square of each frame is used.
    """
    arr = getattr(frames, "frames", frames)
    if bbox is None:
        bbox = center_square_bbox(arr.shape[1:3])
    was_training = model.training
    model.eval()
    rows = []
    try:
        for w in sliding_windows(len(arr), T):
            x = resize_pad_normalize(crop_frames(arr[window_indices(w)], bbox), model.cfg.d)
            probs = torch.softmax(model(x[None]), dim=-1)[0]
            rows.append(probs[: w.end - w.start].numpy())
    finally:
        model.train(was_training)
    return np.concatenate(rows, axis=0)


EventSelector = Callable[[np.ndarray], Sequence[int]]


def argmax_selector(timeline: np.ndarray) -> list[int]:
    # np.argmax returns the first maximum, so ties resolve to the earliest frame
    return [int(np.argmax(timeline[:, e])) for e in range(NUM_EVENTS)]


def detect_events(timeline: np.ndarray, sample_id: str = "",
                  selector: EventSelector | None = None) -> DetectionResult:
    """Pick one frame per event class.

    The default picks each class's most confident frame independently, with no
    ordering constraint between events. ``selector`` lets callers plug in an
    order-aware rule.
    """
    timeline = np.asarray(timeline)
    if timeline.ndim != 2 or len(timeline) < 1:
        raise ValueError("timeline must be a non-empty (frames, classes) array")
    frames = list((selector or argmax_selector)(timeline))
    conf = [float(timeline[f, e]) for e, f in enumerate(frames)]
    return DetectionResult(predicted_frames=frames, confidences=conf, sample_id=sample_id)


def timeline_csv(timeline: np.ndarray) -> str:
    lines = [",".join(TIMELINE_COLUMNS)]
    for i, row in enumerate(timeline):
        lines.append(f"{i}," + ",".join(f"{p:.6f}" for p in row))
    return "\n".join(lines) + "\n"


def write_timeline(path, timeline: np.ndarray) -> None:
    atomic_write_text(path, timeline_csv(timeline))


def write_detections(path, detections: Sequence[DetectionResult]) -> None:
    atomic_write_text(path, json.dumps([d.to_record() for d in detections], indent=2))


def read_detections(path) -> list[DetectionResult]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = [data]
    return [DetectionResult.from_record(r) for r in data]
