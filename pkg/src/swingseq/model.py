"""SwingEventNet: MobileNetV2 features -> (bi)LSTM -> frame-shared linear head."""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np
import torch
from torch import nn

from .dataset import NUM_CLASSES, ConfigurationError

FEATURE_DIM = 1280
STUDIED_INPUT_SIZES = (128, 160, 192, 224)
CHECKPOINT_VERSION = "swingseq-ckpt/1"

# expansion t, output channels c, repeats n, first stride s
INVERTED_RESIDUAL_SETTING = (
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
)
STEM_CHANNELS = 32
NUM_FREEZE_UNITS = 19  # stem, 17 inverted-residual blocks, final 1x1 conv


class IncompatibleWeightsError(ValueError):
    pass


@dataclass
class ModelConfig:
    d: int = 160
    T: int = 64
    lstm_layers: int = 1
    lstm_hidden: int = 256
    bidirectional: bool = True
    width_multiplier: float = 1.0
    freeze_k: int = 0
    pretrained: bool = False
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        if self.lstm_layers < 1 or self.lstm_hidden < 1:
            raise ConfigurationError("lstm_layers and lstm_hidden must be >= 1")
        if self.d < 32 or self.T < 1:
            raise ConfigurationError("d must be >= 32 and T >= 1")
        if not 0 <= self.freeze_k <= NUM_FREEZE_UNITS:
            raise ConfigurationError(f"freeze_k must lie in [0, {NUM_FREEZE_UNITS}]")
        if self.width_multiplier <= 0:
            raise ConfigurationError("width_multiplier must be positive")
        if self.pretrained and self.width_multiplier != 1.0:
            raise ConfigurationError("pretrained weights exist only for width multiplier 1")

    @property
    def directions(self) -> int:
        return 2 if self.bidirectional else 1

    @property
    def feature_dim(self) -> int:
        return _make_divisible(FEATURE_DIM * max(1.0, self.width_multiplier))

    @property
    def off_grid(self) -> bool:
        return self.d not in STUDIED_INPUT_SIZES

    def to_dict(self) -> dict:
        return asdict(self)


def _make_divisible(v: float, divisor: int = 8) -> int:
    new_v = max(divisor, int(v + divisor / 2) // divisor * divisor)
    if new_v < 0.9 * v:
        new_v += divisor
    return new_v


def _conv_bn(inp, oup, kernel, stride, groups=1, relu=True):
    layers = [nn.Conv2d(inp, oup, kernel, stride, (kernel - 1) // 2, groups=groups, bias=False),
              nn.BatchNorm2d(oup, momentum=0.1)]
    if relu:
        layers.append(nn.ReLU6(inplace=True))
    return nn.Sequential(*layers)


class InvertedResidual(nn.Module):
    def __init__(self, inp, oup, stride, expand_ratio):
        super().__init__()
        hidden = inp * expand_ratio
        self.use_res_connect = stride == 1 and inp == oup
        layers = []
        if expand_ratio != 1:
            layers.append(_conv_bn(inp, hidden, 1, 1))
        layers += [
            _conv_bn(hidden, hidden, 3, stride, groups=hidden),
            # linear bottleneck: no nonlinearity after the projection
            nn.Conv2d(hidden, oup, 1, 1, 0, bias=False),
            nn.BatchNorm2d(oup, momentum=0.1),
        ]
        self.conv = nn.Sequential(*layers)

    def forward(self, x):
        if self.use_res_connect:
            return x + self.conv(x)
        return self.conv(x)


class MobileNetV2Features(nn.Module):
    """MobileNetV2 feature extractor; ``features[i]`` is freezing unit i.

    Module names follow torchvision's ``mobilenet_v2().features`` so its state
    dict loads without remapping.
    """

    def __init__(self, width_multiplier: float = 1.0):
        super().__init__()
        inp = _make_divisible(STEM_CHANNELS * width_multiplier)
        self.out_channels = _make_divisible(FEATURE_DIM * max(1.0, width_multiplier))
        layers = [_conv_bn(3, inp, 3, 2)]
        for t, c, n, s in INVERTED_RESIDUAL_SETTING:
            oup = _make_divisible(c * width_multiplier)
            for i in range(n):
                layers.append(InvertedResidual(inp, oup, s if i == 0 else 1, t))
                inp = oup
        layers.append(_conv_bn(inp, self.out_channels, 1, 1))
        self.features = nn.Sequential(*layers)
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out")
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        return self.features(x).mean(dim=(2, 3))


class SwingEventNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.backbone = MobileNetV2Features(cfg.width_multiplier)
        self.rnn = nn.LSTM(self.backbone.out_channels, cfg.lstm_hidden, num_layers=cfg.lstm_layers,
                           batch_first=True, bidirectional=cfg.bidirectional)
        self.head = nn.Linear(cfg.lstm_hidden * cfg.directions, cfg.num_classes)
        bound = 1.0 / math.sqrt(cfg.lstm_hidden)
        for p in self.rnn.parameters():
            nn.init.uniform_(p, -bound, bound)
        nn.init.xavier_uniform_(self.head.weight)
        nn.init.zeros_(self.head.bias)
        self.frozen_units = 0
        if cfg.freeze_k:
            freeze_layers(self, cfg.freeze_k)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Map a (B, T, 3, d, d) batch to (B, T, C) logits."""
        if x.dim() != 5 or x.shape[2] != 3:
            raise ValueError(f"expected a (B, T, 3, d, d) batch, got {tuple(x.shape)}")
        b, t = x.shape[:2]
        feats = self.backbone(x.reshape(b * t, *x.shape[2:])).reshape(b, t, -1)
        out, _ = self.rnn(feats)
        return self.head(out)

    def train(self, mode: bool = True):
        super().train(mode)
        # frozen units keep fixed batch-norm statistics
        for unit in self.backbone.features[:self.frozen_units]:
            unit.eval()
        return self


def build_model(cfg: ModelConfig) -> SwingEventNet:
    if cfg.off_grid:
        warnings.warn(f"input size d={cfg.d} is outside the studied grid {STUDIED_INPUT_SIZES}", stacklevel=2)
    return SwingEventNet(cfg)


@torch.no_grad()
def forward(model: SwingEventNet, batch) -> np.ndarray:
    """Inference-mode event probabilities, shape (B, T, C), rows summing to 1."""
    x = torch.as_tensor(np.asarray(batch, dtype=np.float32)) if not torch.is_tensor(batch) else batch
    d = model.cfg.d
    if x.dim() != 5 or tuple(x.shape[2:]) != (3, d, d):
        raise ValueError(f"expected (B, T, 3, {d}, {d}) input, got {tuple(x.shape)}")
    was_training = model.training
    model.eval()
    try:
        probs = torch.softmax(model(x.float()), dim=-1)
    finally:
        model.train(was_training)
    return probs.numpy()


def freeze_layers(model: SwingEventNet, k: int) -> SwingEventNet:
    """Make the first ``k`` backbone units non-trainable with fixed batch-norm statistics."""
    if not 0 <= k <= NUM_FREEZE_UNITS:
        raise ConfigurationError(f"k must lie in [0, {NUM_FREEZE_UNITS}], got {k}")
    for i, unit in enumerate(model.backbone.features):
        for p in unit.parameters():
            p.requires_grad_(i >= k)
    model.frozen_units = k
    model.cfg.freeze_k = k
    model.train(model.training)
    return model


def load_pretrained_backbone(model: SwingEventNet, weights: Mapping[str, torch.Tensor]) -> SwingEventNet:
    """Replace backbone weights from an external map.

    Accepts torchvision-style keys (``features.N...``), optionally prefixed by
    ``backbone.`` or followed by classifier entries, which are ignored.
    """
    if model.cfg.width_multiplier != 1.0:
        raise ConfigurationError("pretrained weights exist only for width multiplier 1")
    target = model.backbone.state_dict()
    incoming = {}
    for key, value in weights.items():
        k = key[len("backbone."):] if key.startswith("backbone.") else key
        if k.startswith("features."):
            incoming[k] = torch.as_tensor(value)
    missing = sorted(set(target) - set(incoming))
    if missing:
        raise IncompatibleWeightsError(f"missing backbone weights: {missing[:5]}{' ...' if len(missing) > 5 else ''}")
    for k, v in incoming.items():
        if k not in target:
            raise IncompatibleWeightsError(f"unexpected backbone weight {k}")
        if tuple(v.shape) != tuple(target[k].shape):
            raise IncompatibleWeightsError(f"{k}: shape {tuple(v.shape)} != {tuple(target[k].shape)}")
    model.backbone.load_state_dict(incoming, strict=True)
    return model


def save_checkpoint(path: str | os.PathLike, model: SwingEventNet, iteration: int = 0) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "frozen_units": model.frozen_units,
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "iteration": int(iteration),
    }
    tmp = f"{path}.tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> tuple[SwingEventNet, int]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise IncompatibleWeightsError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    cfg = ModelConfig(**payload["config"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = build_model(cfg)
    model.load_state_dict(payload["state_dict"])
    freeze_layers(model, payload.get("frozen_units", cfg.freeze_k))
    return model, int(payload["iteration"])
