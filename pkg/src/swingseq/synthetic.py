"""Procedural stick-figure swings with exactly known event frames.

A two-segment figure (arm, shaft) is driven by a swing phase ``p(t)``:
0 while addressing, rising to 1 at the top, back to 0 at impact and down to
-1 at the finish. Arm and shaft angles are simple functions of the phase, so
each event is a crossing of the continuous profile and its frame is the first
frame at or after that crossing.

Angles are measured from straight down, positive towards the backswing side.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import ConfigurationError, SwingAnnotation, save_corpus, validate_annotation
from .preprocess import FrameSequence, write_frame_dir

# blend of sinusoidal easing and constant speed per phase; the linear share
# keeps velocity non-zero at Address, Top and Finish so those frames are visible
BACKSWING_LINEAR = 0.5
DOWNSWING_LINEAR = 0.3
FOLLOW_LINEAR = 0.4

HORIZONTAL = 90.0


@dataclass
class SyntheticSwingConfig:
    num_frames: int | None = None
    tempo: float = 3.0
    lead_in: int = 8
    lead_out: int = 8
    image_size: int = 112
    handedness: str = "right"
    jitter: float = 3.0
    seed: int = 0
    backswing_frames: int | None = None
    fps: float = 30.0

    def __post_init__(self):
        if self.tempo <= 0:
            raise ConfigurationError("tempo must be positive")
        if self.handedness not in ("right", "left"):
            raise ConfigurationError("handedness must be 'right' or 'left'")
        if self.num_frames is None and self.backswing_frames is None:
            raise ConfigurationError("give num_frames or backswing_frames")
        if self.num_frames is not None and self.num_frames < self.lead_in + self.lead_out + 8:
            raise ConfigurationError("num_frames must be >= lead_in + lead_out + 8")
        if self.lead_in < 0 or self.lead_out < 0:
            raise ConfigurationError("lead_in and lead_out must be non-negative")


@dataclass(frozen=True)
class SwingProfile:
    """Continuous swing timing and pose amplitudes for one clip."""

    address: int
    top: int
    impact: int
    finish: int
    arm_top: float = 165.0
    shaft_top: float = 265.0
    arm_finish: float = 150.0
    shaft_finish: float = 215.0

    def phase(self, t):
        t = np.asarray(t, dtype=float)
        a, tp, i, f = self.address, self.top, self.impact, self.finish
        p = np.zeros_like(t)
        u = np.clip((t - a) / (tp - a), 0, 1)
        back = (1 - BACKSWING_LINEAR) * np.sin(np.pi / 2 * u) + BACKSWING_LINEAR * u
        u = np.clip((t - tp) / (i - tp), 0, 1)
        down = 1 - ((1 - DOWNSWING_LINEAR) * (1 - np.cos(np.pi / 2 * u)) + DOWNSWING_LINEAR * u)
        u = np.clip((t - i) / (f - i), 0, 1)
        follow = -((1 - FOLLOW_LINEAR) * np.sin(np.pi / 2 * u) + FOLLOW_LINEAR * u)
        p = np.where(t <= a, 0.0, back)
        p = np.where(t >= tp, down, p)
        p = np.where(t >= i, follow, p)
        p = np.where(t >= f, -1.0, p)
        return np.where(t == i, 0.0, np.where(t == tp, 1.0, p))

    def angles(self, t):
        """(arm, shaft) angles in degrees at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        p = self.phase(t)
        downswing = (t > self.top) & (t < self.impact)
        arm = np.where(p >= 0, self.arm_top * p, self.arm_finish * p)
        # shaft lags the arm on the way down, releasing late towards impact
        shaft = np.where(p >= 0, np.where(downswing, self.shaft_top * p * (2 - p), self.shaft_top * p),
                         self.shaft_finish * p)
        return arm, shaft

    def _crossing(self, lo: float, hi: float, fn) -> float:
        """Root of the monotone ``fn`` on [lo, hi] by bisection."""
        flo = fn(lo)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if (fn(mid) >= 0) == (flo >= 0):
                lo, flo = mid, fn(mid)
            else:
                hi = mid
        return hi

    def crossing_times(self) -> dict[str, float]:
        arm = lambda t: float(self.angles(t)[0])  # noqa: E731
        shaft = lambda t: float(self.angles(t)[1])  # noqa: E731
        return {
            "toe_up": self._crossing(self.address, self.top, lambda t: shaft(t) - HORIZONTAL),
            "mid_backswing": self._crossing(self.address, self.top, lambda t: arm(t) - HORIZONTAL),
            "mid_downswing": self._crossing(self.top, self.impact, lambda t: arm(t) - HORIZONTAL),
            "mid_follow_through": self._crossing(self.impact, self.finish, lambda t: shaft(t) + HORIZONTAL),
        }

    def event_frames(self) -> list[int]:
        c = self.crossing_times()
        first = lambda t: int(math.ceil(t - 1e-9))  # noqa: E731
        return [self.address, first(c["toe_up"]), first(c["mid_backswing"]), self.top,
                first(c["mid_downswing"]), self.impact, first(c["mid_follow_through"]), self.finish]


def scan_event_frames(profile: SwingProfile, num_frames: int) -> list[int]:
    """Event frames found by scanning sampled angles frame by frame."""
    t = np.arange(num_frames)
    arm, shaft = profile.angles(t)
    moving = np.nonzero(arm != arm[0])[0]
    address = int(moving[0]) - 1
    top = int(np.argmax(arm))
    back, down = t[(t > address) & (t <= top)], t[t > top]
    toe_up = int(back[np.argmax(shaft[back] >= HORIZONTAL)])
    mid_back = int(back[np.argmax(arm[back] >= HORIZONTAL)])
    mid_down = int(down[np.argmax(arm[down] <= HORIZONTAL)])
    impact = int(down[np.argmax(shaft[down] <= 0)])
    after = t[t > impact]
    mft = int(after[np.argmax(shaft[after] <= -HORIZONTAL)])
    finish = int(after[np.argmax(shaft[after] == shaft[-1])])
    return [address, toe_up, mid_back, top, mid_down, impact, mft, finish]


# -- rendering -----------------------------------------------------------------

ARM_COLOR = np.array([235, 190, 150], dtype=np.float32)
SHAFT_COLOR = np.array([245, 245, 245], dtype=np.float32)
HEAD_COLOR = np.array([220, 40, 40], dtype=np.float32)
BODY_COLOR = np.array([35, 35, 60], dtype=np.float32)


@dataclass
class _Figure:
    size: int
    shoulder: tuple[float, float] = field(init=False)
    arm_len: float = field(init=False)
    shaft_len: float = field(init=False)

    def __post_init__(self):
        s = self.size
        self.shoulder = (0.5 * s, 0.5 * s)
        self.arm_len = 0.19 * s
        self.shaft_len = 0.23 * s
        self.arm_w = max(1.5, 0.035 * s)
        self.shaft_w = max(1.0, 0.02 * s)
        self.clubhead_r = max(1.5, 0.03 * s)

    def segments(self, arm_deg: float, shaft_deg: float):
        """Drawable pieces as ``(p0, p1, half_width, color)``; a disc has p0 == p1."""
        s = self.size
        sx, sy = self.shoulder
        hip = (sx, 0.72 * s)
        body_w = max(0.75, 0.02 * s)
        hand, tip = self.limbs(arm_deg, shaft_deg)
        return [
            (self.shoulder, hip, body_w, BODY_COLOR),
            (hip, (sx - 0.08 * s, 0.93 * s), body_w, BODY_COLOR),
            (hip, (sx + 0.08 * s, 0.93 * s), body_w, BODY_COLOR),
            ((sx, sy - 0.05 * s), (sx, sy - 0.05 * s), 0.055 * s, BODY_COLOR),
            (self.shoulder, hand, self.arm_w / 2, ARM_COLOR),
            (hand, tip, self.shaft_w / 2, SHAFT_COLOR),
            (tip, tip, self.clubhead_r, HEAD_COLOR),
        ]

    def limbs(self, arm_deg: float, shaft_deg: float):
        sx, sy = self.shoulder
        a, s = math.radians(arm_deg), math.radians(shaft_deg)
        hand = (sx - self.arm_len * math.sin(a), sy + self.arm_len * math.cos(a))
        tip = (hand[0] - self.shaft_len * math.sin(s), hand[1] + self.shaft_len * math.cos(s))
        return hand, tip


def _segment_coverage(xx, yy, p0, p1, half_width):
    """Anti-aliased coverage of a thick segment at pixel centers."""
    (x0, y0), (x1, y1) = p0, p1
    dx, dy = x1 - x0, y1 - y0
    L2 = dx * dx + dy * dy
    if L2 == 0:
        dist = np.hypot(xx - x0, yy - y0)
    else:
        u = np.clip(((xx - x0) * dx + (yy - y0) * dy) / L2, 0, 1)
        dist = np.hypot(xx - x0 - u * dx, yy - y0 - u * dy)
    return np.clip(half_width + 0.5 - dist, 0, 1)


def _layers(fig: _Figure, arm_deg: float, shaft_deg: float, xx, yy):
    return [(_segment_coverage(xx, yy, p0, p1, hw), color)
            for p0, p1, hw, color in fig.segments(arm_deg, shaft_deg)]


def figure_mask(fig: _Figure, arm_deg: float, shaft_deg: float) -> np.ndarray:
    """Union coverage of the figure on a blank canvas, shape (S, S)."""
    yy, xx = np.mgrid[0:fig.size, 0:fig.size] + 0.5
    cov = np.zeros((fig.size, fig.size), dtype=np.float32)
    for c, _ in _layers(fig, arm_deg, shaft_deg, xx, yy):
        cov = np.maximum(cov, c)
    return cov


def _background(size: int, rng: np.random.Generator) -> np.ndarray:
    coarse = rng.uniform(0, 1, size=(6, 6, 3))
    base = np.array([60, 120, 60]) + rng.uniform(-25, 25, size=3)
    tex = np.asarray(Image.fromarray((coarse * 255).astype(np.uint8)).resize((size, size), Image.BILINEAR),
                     dtype=np.float32) / 255.0
    return np.clip(base + 50 * (tex - 0.5), 0, 255).astype(np.float32)


def _figure_bbox(fig: _Figure, arm: np.ndarray, shaft: np.ndarray) -> tuple[float, float, float, float]:
    lo, hi = np.full(2, np.inf), np.full(2, -np.inf)
    for a, sh in zip(arm, shaft):
        for p0, p1, hw, _ in fig.segments(float(a), float(sh)):
            pts = np.array([p0, p1])
            # coverage vanishes beyond half_width + 0.5 px from the axis
            lo = np.minimum(lo, pts.min(axis=0) - hw - 0.5)
            hi = np.maximum(hi, pts.max(axis=0) + hw + 0.5)
    lo = np.clip(np.floor(lo), 0, fig.size)
    hi = np.clip(np.ceil(hi), 0, fig.size)
    x, y = lo / fig.size
    w, h = (hi - lo) / fig.size
    return float(x), float(y), float(w), float(h)


def _timing(cfg: SyntheticSwingConfig) -> tuple[int, int, int]:
    """Total length, backswing and downswing frame counts."""
    if cfg.backswing_frames is not None:
        b = int(cfg.backswing_frames)
        w = max(1, int(round(b / cfg.tempo)))
        total = cfg.lead_in + b + 2 * w + cfg.lead_out + 1
        if cfg.num_frames is not None and cfg.num_frames != total:
            raise ConfigurationError(f"num_frames={cfg.num_frames} conflicts with backswing timing ({total} frames)")
    else:
        span = cfg.num_frames - 1 - cfg.lead_in - cfg.lead_out
        w = max(1, int(round(span / (cfg.tempo + 2))))
        b = span - 2 * w
        total = cfg.num_frames
    if b < 1 or abs(b / w - cfg.tempo) > 0.1 * cfg.tempo:
        raise ConfigurationError(f"cannot realize tempo {cfg.tempo} with backswing {b} / downswing {w} frames")
    return total, b, w


def make_profile(cfg: SyntheticSwingConfig) -> tuple[SwingProfile, int]:
    total, b, w = _timing(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    address = cfg.lead_in
    profile = SwingProfile(address=address, top=address + b, impact=address + b + w, finish=address + b + 2 * w,
                           arm_top=float(rng.uniform(155, 175)), shaft_top=float(rng.uniform(250, 280)),
                           arm_finish=float(rng.uniform(135, 160)), shaft_finish=float(rng.uniform(200, 230)))
    ev = profile.event_frames()
    if any(q <= p for p, q in zip(ev, ev[1:])):
        raise ConfigurationError(f"swing too short to separate all events: {ev}")
    return profile, total


def generate_swing_clip(cfg: SyntheticSwingConfig, sample_id: str = "synth-0",
                        source_video_id: str | None = None,
                        background_seed: int | None = None) -> tuple[FrameSequence, SwingAnnotation]:
    profile, n = make_profile(cfg)
    fig = _Figure(cfg.image_size)
    arm, shaft = profile.angles(np.arange(n))
    bg_rng = np.random.default_rng([cfg.seed if background_seed is None else background_seed, 2])
    background = _background(cfg.image_size, bg_rng)
    noise_rng = np.random.default_rng([cfg.seed, 3])
    yy, xx = np.mgrid[0:cfg.image_size, 0:cfg.image_size] + 0.5
    frames = np.empty((n, cfg.image_size, cfg.image_size, 3), dtype=np.uint8)
    for t in range(n):
        img = background.copy()
        for cov, color in _layers(fig, float(arm[t]), float(shaft[t]), xx, yy):
            img = img * (1 - cov[..., None]) + color * cov[..., None]
        if cfg.jitter > 0:
            img = img + noise_rng.normal(0, cfg.jitter, size=img.shape)
        frames[t] = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    x, y, w, h = _figure_bbox(fig, arm, shaft)
    if cfg.handedness == "left":
        frames = frames[:, :, ::-1].copy()
        x = 1.0 - x - w
    ann = SwingAnnotation(
        sample_id=sample_id, source_video_id=source_video_id or sample_id, num_frames=n,
        event_frames=profile.event_frames(), bbox=(x, y, w, h),
        slow_motion=(profile.impact - profile.address) / cfg.fps > 1.5,
        club="driver", view="face-on", player_name=f"synthetic-{cfg.handedness}", sex="male", fps=cfg.fps)
    return FrameSequence(frames, fps=cfg.fps), ann


@dataclass
class CorpusRanges:
    backswing: tuple[int, int] = (36, 66)
    tempo: tuple[float, float] = (2.6, 3.4)
    lead_in: tuple[int, int] = (4, 16)
    lead_out: tuple[int, int] = (4, 16)
    jitter: tuple[float, float] = (0.0, 6.0)
    image_size: int = 112
    left_handed_prob: float = 0.5


def generate_corpus(n: int, seed: int = 0, n_sources: int | None = None,
                    ranges: CorpusRanges | None = None, out_dir: str | os.PathLike | None = None,
                    prefix: str = "synth") -> tuple[list[SwingAnnotation], dict[str, FrameSequence]]:
    """Generate ``n`` clips; clips of one source video share a background.

    With ``out_dir`` the corpus is also written as ``annotations.json`` plus
    ``frames/<sample_id>/NNNNNN.png``.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    ranges = ranges or CorpusRanges()
    n_sources = n_sources or max(1, n // 4)
    children = np.random.SeedSequence(seed).spawn(n + n_sources)
    source_seeds = [int(c.generate_state(1)[0]) for c in children[n:]]
    anns, clips = [], {}
    for i in range(n):
        clip_seed = int(children[i].generate_state(1)[0])
        rng = np.random.default_rng(clip_seed)
        src = i % n_sources
        tempo = float(rng.uniform(*ranges.tempo))
        backswing = int(rng.integers(ranges.backswing[0], ranges.backswing[1] + 1))
        cfg = SyntheticSwingConfig(
            tempo=tempo, backswing_frames=backswing,
            lead_in=int(rng.integers(ranges.lead_in[0], ranges.lead_in[1] + 1)),
            lead_out=int(rng.integers(ranges.lead_out[0], ranges.lead_out[1] + 1)),
            image_size=ranges.image_size,
            handedness="left" if rng.random() < ranges.left_handed_prob else "right",
            jitter=float(rng.uniform(*ranges.jitter)), seed=clip_seed)
        sample_id = f"{prefix}-{i:04d}"
        frames, ann = generate_swing_clip(cfg, sample_id=sample_id, source_video_id=f"{prefix}-src-{src:03d}",
                                          background_seed=source_seeds[src])
        problems = validate_annotation(ann)
        if problems:
            raise ConfigurationError(f"{sample_id}: generated annotation is invalid: {problems}")
        anns.append(ann)
        clips[sample_id] = frames
        if out_dir is not None:
            try:
                write_frame_dir(Path(out_dir) / "frames" / sample_id, frames)
            except OSError as exc:
                raise OSError(f"failed writing frames for {sample_id}") from exc
    if out_dir is not None:
        save_corpus(Path(out_dir) / "annotations.json", anns)
    return anns, clips
