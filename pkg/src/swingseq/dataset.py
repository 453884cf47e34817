"""Annotation schema, corpus I/O, source-grouped splits and corpus statistics."""
from __future__ import annotations

import json
import os
import tempfile
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class EventLabel(IntEnum):
    ADDRESS = 0
    TOE_UP = 1
    MID_BACKSWING = 2
    TOP = 3
    MID_DOWNSWING = 4
    IMPACT = 5
    MID_FOLLOW_THROUGH = 6
    FINISH = 7
    NO_EVENT = 8


NUM_EVENTS = 8
NUM_CLASSES = 9
EVENT_ABBREVIATIONS = ("A", "TU", "MB", "T", "MD", "I", "MFT", "F")

CLUBS = ("driver", "wood", "iron", "wedge", "other")
VIEWS = ("face-on", "down-the-line", "other")
SEXES = ("male", "female")


class ConfigurationError(ValueError):
    """Raised when inputs cannot satisfy an operation's preconditions."""


class DegenerateSwingError(ValueError):
    pass


@dataclass
class SwingAnnotation:
    """Labels for one trimmed swing clip.

    ``event_frames`` holds one frame index per swing event (Address .. Finish),
    relative to the first stored frame. ``bbox`` is ``(x, y, w, h)`` normalized
    to the frame size.
    """

    sample_id: str
    source_video_id: str
    num_frames: int
    event_frames: list[int]
    bbox: tuple[float, float, float, float]
    slow_motion: bool = False
    club: str = "driver"
    view: str = "face-on"
    player_name: str = ""
    sex: str = "male"
    fps: float = 30.0
    start_frame: int = 0
    end_frame: int | None = None

    def __post_init__(self):
        self.event_frames = [int(e) for e in self.event_frames]
        self.bbox = tuple(float(v) for v in self.bbox)
        if self.end_frame is None:
            self.end_frame = self.num_frames - 1

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["bbox"] = list(self.bbox)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "SwingAnnotation":
        """Build an annotation from a JSON record, trimming so that start_frame is 0."""
        rec = dict(rec)
        start = int(rec.pop("start_frame", 0))
        end = rec.pop("end_frame", None)
        if start:
            rec["event_frames"] = [int(e) - start for e in rec["event_frames"]]
            if end is not None:
                end = int(end) - start
                rec["num_frames"] = end + 1
        ann = cls(**rec)
        if end is not None:
            ann.end_frame = int(end)
        return ann


@dataclass(frozen=True)
class Violation:
    field: str
    reason: str


def validate_annotation(ann: SwingAnnotation) -> list[Violation]:
    """Return every schema violation of ``ann``; an empty list means valid."""
    out = []
    ev = list(ann.event_frames)
    if ann.num_frames < NUM_CLASSES:
        out.append(Violation("num_frames", f"clip has {ann.num_frames} frames, need at least 9"))
    if ann.start_frame != 0:
        out.append(Violation("start_frame", "clip is not trimmed (start_frame != 0)"))
    if ann.end_frame != ann.num_frames - 1:
        out.append(Violation("end_frame", "end_frame must equal num_frames - 1"))
    if len(ev) != NUM_EVENTS:
        out.append(Violation("event_frames", f"expected 8 event frames, got {len(ev)}"))
    else:
        if any(b <= a for a, b in zip(ev, ev[1:])):
            out.append(Violation("event_frames", "ordering: event frames must be strictly increasing"))
        if ev[0] < 0:
            out.append(Violation("event_frames", "Address precedes the first frame"))
        if ev[-1] > ann.end_frame:
            out.append(Violation("event_frames", "Finish lies beyond end_frame"))

    if len(ann.bbox) != 4:
        out.append(Violation("bbox", "bbox must have 4 components"))
    else:
        x, y, w, h = ann.bbox
        if not all(0.0 <= v <= 1.0 for v in ann.bbox):
            out.append(Violation("bbox", "components must lie in [0, 1]"))
        elif x + w > 1.0 + 1e-9 or y + h > 1.0 + 1e-9:
            out.append(Violation("bbox", "bbox exceeds frame"))
        if w <= 0 or h <= 0:
            out.append(Violation("bbox", "bbox has zero area"))

    if ann.club not in CLUBS:
        out.append(Violation("club", f"unknown club {ann.club!r}"))
    if ann.view not in VIEWS:
        out.append(Violation("view", f"unknown view {ann.view!r}"))
    if ann.sex not in SEXES:
        out.append(Violation("sex", f"unknown sex {ann.sex!r}"))
    if not ann.fps > 0:
        out.append(Violation("fps", "fps must be positive"))
    return out


def load_corpus(path: str | os.PathLike) -> list[SwingAnnotation]:
    with open(path, encoding="utf-8") as f:
        records = json.load(f)
    if not isinstance(records, list):
        raise ConfigurationError(f"{path}: corpus must be a JSON list of annotation records")
    return [SwingAnnotation.from_record(r) for r in records]


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_corpus(path: str | os.PathLike, samples: Iterable[SwingAnnotation]) -> None:
    atomic_write_text(path, json.dumps([s.to_record() for s in samples], indent=2))


@dataclass
class SplitAssignment:
    n_folds: int
    fold_of_sample: dict[str, int]
    seed: int

    def validation_ids(self, fold: int) -> list[str]:
        return [s for s, k in self.fold_of_sample.items() if k == fold]

    def training_ids(self, fold: int) -> list[str]:
        return [s for s, k in self.fold_of_sample.items() if k != fold]

    def fold_sizes(self) -> list[int]:
        c = Counter(self.fold_of_sample.values())
        return [c.get(k, 0) for k in range(self.n_folds)]


def generate_splits(samples: Sequence[SwingAnnotation], n_folds: int = 4, seed: int = 0) -> SplitAssignment:
    """Assign samples to folds so that no source video straddles two folds.

    Source-video groups are shuffled with a seeded generator, then each group
    goes to the fold currently holding the fewest samples (lowest index on ties).
    """
    if n_folds < 2:
        raise ConfigurationError("n_folds must be at least 2")
    groups: dict[str, list[str]] = defaultdict(list)
    for s in samples:
        groups[s.source_video_id].append(s.sample_id)
    if len(groups) < n_folds:
        raise ConfigurationError(
            f"{len(groups)} distinct source videos cannot fill {n_folds} folds")

    keys = sorted(groups)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(keys))
    sizes = [0] * n_folds
    assignment = {}
    for i in order:
        members = groups[keys[i]]
        k = int(np.argmin(sizes))
        sizes[k] += len(members)
        for sid in members:
            assignment[sid] = k
    return SplitAssignment(n_folds=n_folds, fold_of_sample=assignment, seed=seed)


def tempo(ann: SwingAnnotation) -> float:
    """Backswing duration over downswing duration, in frames."""
    address, top, impact = (ann.event_frames[EventLabel.ADDRESS],
                            ann.event_frames[EventLabel.TOP],
                            ann.event_frames[EventLabel.IMPACT])
    if impact <= top:
        raise DegenerateSwingError(f"{ann.sample_id}: Impact ({impact}) must follow Top ({top})")
    return (top - address) / (impact - top)


@dataclass
class CorpusStats:
    num_samples: int
    total_frames: int
    events_per_frame: float
    mean_tempo: float
    club_counts: dict[str, int] = field(default_factory=dict)
    view_counts: dict[str, int] = field(default_factory=dict)
    sex_counts: dict[str, int] = field(default_factory=dict)
    slow_motion_counts: dict[str, int] = field(default_factory=dict)
    density_by_speed: dict[str, float] = field(default_factory=dict)


def _density(samples: Sequence[SwingAnnotation]) -> float:
    return NUM_EVENTS * len(samples) / sum(s.num_frames for s in samples)


def corpus_stats(samples: Sequence[SwingAnnotation]) -> CorpusStats:
    if not samples:
        raise ConfigurationError("corpus is empty")
    speed = lambda s: "slow-motion" if s.slow_motion else "real-time"  # noqa: E731
    by_speed = defaultdict(list)
    for s in samples:
        by_speed[speed(s)].append(s)
    return CorpusStats(
        num_samples=len(samples),
        total_frames=sum(s.num_frames for s in samples),
        events_per_frame=_density(samples),
        mean_tempo=float(np.mean([tempo(s) for s in samples])),
        club_counts=dict(Counter(s.club for s in samples)),
        view_counts=dict(Counter(s.view for s in samples)),
        sex_counts=dict(Counter(s.sex for s in samples)),
        slow_motion_counts=dict(Counter(speed(s) for s in samples)),
        density_by_speed={k: _density(v) for k, v in sorted(by_speed.items())},
    )
