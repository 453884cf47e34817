"""Frame preparation: bbox crop, aspect-preserving resize with mean padding,
normalization, window augmentation and looped training-window sampling."""
from __future__ import annotations

import math
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .dataset import NUM_EVENTS, EventLabel, SwingAnnotation

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class DegenerateInputError(ValueError):
    pass


@dataclass
class FrameSequence:
    """Clip frames as an (N, H, W, 3) uint8 RGB array."""

    frames: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError(f"frames must be (N, H, W, 3), got {self.frames.shape}")
        if len(self.frames) < 1:
            raise ValueError("a frame sequence needs at least one frame")

    def __len__(self):
        return len(self.frames)


@dataclass
class PreparedWindow:
    pixels: np.ndarray  # (T, 3, d, d) float32, normalized
    labels: np.ndarray  # (T,) int64 in 0..8
    source_sample_id: str
    window_start: int


@dataclass
class AugmentParams:
    horizontal_flip_prob: float = 0.5
    max_rotation_deg: float = 5.0
    max_shear_deg: float = 5.0
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.horizontal_flip_prob <= 1.0:
            raise ValueError("horizontal_flip_prob must lie in [0, 1]")
        if self.max_rotation_deg < 0 or self.max_shear_deg < 0:
            raise ValueError("augmentation angles must be non-negative")


# -- frame sources -------------------------------------------------------------

class FrameSource(Protocol):
    def load(self, sample_id: str) -> FrameSequence: ...


def read_frame_dir(path: str | os.PathLike, fps: float = 30.0) -> FrameSequence:
    """Read a directory of numbered image files, ordered by the number in the name."""
    path = Path(path)
    files = [p for p in path.iterdir() if p.suffix.lower() in {".png", ".jpg", ".jpeg", ".bmp"}]
    if not files:
        raise FileNotFoundError(f"no image frames in {path}")
    files.sort(key=lambda p: (len(p.stem), p.stem))
    frames = []
    for i, p in enumerate(files):
        try:
            with Image.open(p) as im:
                frames.append(np.asarray(im.convert("RGB")))
        except OSError as exc:
            raise OSError(f"failed to decode frame {i} ({p})") from exc
    return FrameSequence(np.stack(frames), fps=fps)


def write_frame_dir(path: str | os.PathLike, seq: FrameSequence) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        Image.fromarray(frame).save(path / f"{i:06d}.png")


class DirectoryFrameSource:
    """Frames stored as ``<root>/<sample_id>/<index>.png``."""

    def __init__(self, root: str | os.PathLike, fps: float = 30.0):
        self.root = Path(root)
        self.fps = fps

    def load(self, sample_id: str) -> FrameSequence:
        return read_frame_dir(self.root / sample_id, fps=self.fps)


class MemoryFrameSource:
    def __init__(self, clips: dict[str, FrameSequence]):
        self.clips = clips

    def load(self, sample_id: str) -> FrameSequence:
        return self.clips[sample_id]


# -- per-frame geometry --------------------------------------------------------

def _to_float(frame: np.ndarray) -> np.ndarray:
    if np.issubdtype(frame.dtype, np.integer):
        return frame.astype(np.float32) / 255.0
    return frame.astype(np.float32)


def crop_box(shape: tuple[int, int], bbox: Sequence[float]) -> tuple[int, int, int, int]:
    """Pixel bounds ``(top, bottom, left, right)`` of a normalized bbox."""
    H, W = shape
    x, y, w, h = bbox
    left, right = int(round(x * W)), int(round((x + w) * W))
    top, bottom = int(round(y * H)), int(round((y + h) * H))
    left, top = max(left, 0), max(top, 0)
    right, bottom = min(right, W), min(bottom, H)
    if right <= left or bottom <= top:
        raise DegenerateInputError(f"bbox {tuple(bbox)} has zero area on a {W}x{H} frame")
    return top, bottom, left, right


def center_square_bbox(shape: tuple[int, int]) -> tuple[float, float, float, float]:
    H, W = shape
    s = min(H, W)
    return ((W - s) / 2 / W, (H - s) / 2 / H, s / W, s / H)


def crop_frames(frames: np.ndarray, bbox: Sequence[float]) -> torch.Tensor:
    """Crop an (N, H, W, 3) clip to ``bbox``; returns (N, 3, h, w) float in [0, 1]."""
    top, bottom, left, right = crop_box(frames.shape[1:3], bbox)
    crop = _to_float(np.ascontiguousarray(frames[:, top:bottom, left:right]))
    return torch.from_numpy(crop).permute(0, 3, 1, 2).contiguous()


def pad_amounts(h: int, w: int, d: int) -> tuple[int, int, int, int]:
    """Resized size and leading padding: ``(new_h, new_w, pad_top, pad_left)``."""
    scale = d / max(h, w)
    nh = d if h >= w else max(1, min(d, int(round(h * scale))))
    nw = d if w >= h else max(1, min(d, int(round(w * scale))))
    return nh, nw, (d - nh) // 2, (d - nw) // 2


def resize_pad_normalize(crops: torch.Tensor, d: int) -> torch.Tensor:
    """(N, 3, h, w) crops in [0, 1] -> (N, 3, d, d) normalized, pad pixels exactly 0."""
    n, _, h, w = crops.shape
    nh, nw, top, left = pad_amounts(h, w, d)
    resized = F.interpolate(crops, size=(nh, nw), mode="bilinear", align_corners=False)
    mean = torch.from_numpy(IMAGENET_MEAN).view(1, 3, 1, 1)
    std = torch.from_numpy(IMAGENET_STD).view(1, 3, 1, 1)
    out = torch.zeros((n, 3, d, d), dtype=torch.float32)
    out[:, :, top:top + nh, left:left + nw] = (resized - mean) / std
    return out


def crop_resize_normalize(frame: np.ndarray, bbox: Sequence[float], d: int) -> np.ndarray:
    """Crop one H x W x 3 frame to ``bbox`` and return a 3 x d x d normalized array.

    The crop is bilinearly resized so its longest side is ``d``; the short side
    is centered and padded with the reference mean colour, which normalizes to 0.
    """
    if d < 32:
        raise ValueError("d must be at least 32")
    crops = crop_frames(np.asarray(frame)[None], bbox)
    return resize_pad_normalize(crops, d)[0].numpy()


# -- augmentation --------------------------------------------------------------

@dataclass(frozen=True)
class AugmentDraw:
    flip: bool
    rotation_deg: float
    shear_deg: float


def draw_augmentation(params: AugmentParams, rng: np.random.Generator) -> AugmentDraw:
    flip = bool(rng.random() < params.horizontal_flip_prob)
    rot = float(rng.uniform(-params.max_rotation_deg, params.max_rotation_deg))
    shear = float(rng.uniform(-params.max_shear_deg, params.max_shear_deg))
    return AugmentDraw(flip, rot, shear)


def hflip(x: torch.Tensor) -> torch.Tensor:
    return torch.flip(x, dims=[-1])


def affine(x: torch.Tensor, rotation_deg: float, shear_deg: float, fill: torch.Tensor) -> torch.Tensor:
    """Rotate and x-shear (N, C, H, W) images about their center; uncovered area gets ``fill``."""
    if rotation_deg == 0 and shear_deg == 0:
        return x
    n, c, h, w = x.shape
    a = math.radians(rotation_deg)
    s = math.tan(math.radians(shear_deg))
    # forward map in pixel units (x right, y down), centered
    fwd = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]]) @ np.array([[1.0, s], [0.0, 1.0]])
    inv = np.linalg.inv(fwd)
    # affine_grid works in normalized coords; convert through the pixel aspect
    scale = np.diag([w / 2.0, h / 2.0])
    theta = np.linalg.inv(scale) @ inv @ scale
    theta = torch.tensor(np.hstack([theta, np.zeros((2, 1))]), dtype=x.dtype)
    grid = F.affine_grid(theta.expand(n, 2, 3), list(x.shape), align_corners=False)
    fill = fill.view(1, c, 1, 1).to(x.dtype)
    out = F.grid_sample(x - fill, grid, mode="bilinear", padding_mode="zeros", align_corners=False)
    return out + fill


def augment(frames: torch.Tensor | np.ndarray, params: AugmentParams, rng: np.random.Generator,
            fill=None):
    """Apply one flip decision and one rotation/shear to every frame of a window.

    ``frames`` is (T, 3, H, W). ``fill`` is the per-channel value for uncovered
    pixels: the mean colour for raw crops, 0 for already-normalized windows
    (the default when ``frames`` is a numpy array).
    """
    if not params.enabled:
        return frames
    as_numpy = isinstance(frames, np.ndarray)
    x = torch.from_numpy(frames) if as_numpy else frames
    if fill is None:
        fill = torch.zeros(3) if as_numpy else torch.from_numpy(IMAGENET_MEAN)
    draw = draw_augmentation(params, rng)
    if draw.flip:
        x = hflip(x)
    x = affine(x, draw.rotation_deg, draw.shear_deg, torch.as_tensor(fill, dtype=torch.float32))
    return x.numpy() if as_numpy else x


# -- windows and labels --------------------------------------------------------

def label_frames(ann: SwingAnnotation, window_indices: Sequence[int]) -> np.ndarray:
    """Per-frame targets: event index on annotated event frames, NoEvent elsewhere."""
    lookup = {f: e for e, f in enumerate(ann.event_frames[:NUM_EVENTS])}
    return np.array([lookup.get(int(i), EventLabel.NO_EVENT) for i in window_indices], dtype=np.int64)


def looped_indices(num_frames: int, start: int, T: int) -> np.ndarray:
    return (start + np.arange(T)) % num_frames


def window_rng(seed: int, sample_id: str, epoch: int) -> np.random.Generator:
    """Generator owned by one (seed, sample, epoch) draw, stable across processes."""
    return np.random.default_rng([seed, zlib.crc32(sample_id.encode()), epoch])


def sample_training_window(ann: SwingAnnotation, frames: FrameSequence, T: int,
                           rng: np.random.Generator, d: int = 160,
                           augment_params: AugmentParams | None = None,
                           start: int | None = None) -> PreparedWindow:
    """Draw a random start frame and take T frames, looping past the clip end."""
    if T < 1:
        raise ValueError("T must be >= 1")
    n = len(frames)
    if start is None:
        start = int(rng.integers(0, n))
    idx = looped_indices(n, start, T)
    crops = crop_frames(frames.frames[idx], ann.bbox)
    if augment_params is not None and augment_params.enabled:
        crops = augment(crops, augment_params, rng)
    pixels = resize_pad_normalize(crops, d).numpy()
    return PreparedWindow(pixels=pixels, labels=label_frames(ann, idx),
                          source_sample_id=ann.sample_id, window_start=start)
