"""Closed-form parameter and FLOP counts for SwingEventNet configurations.

FLOPs follow the multiply-accumulate convention: one MAC counts as one FLOP.
Nothing here touches torch; the counts are derived from the layer table alone
so they can be checked against a built model.
"""
from __future__ import annotations

from dataclasses import dataclass

from .model import (FEATURE_DIM, INVERTED_RESIDUAL_SETTING, STEM_CHANNELS, ModelConfig,
                    _make_divisible)


@dataclass(frozen=True)
class ConvSpec:
    unit: int  # freezing unit index
    in_ch: int
    out_ch: int
    kernel: int
    stride: int
    groups: int = 1
    relu: bool = True
    residual: bool = False  # output is summed with the block input


def backbone_convs(width_multiplier: float = 1.0) -> list[ConvSpec]:
    inp = _make_divisible(STEM_CHANNELS * width_multiplier)
    convs = [ConvSpec(0, 3, inp, 3, 2)]
    unit = 1
    for t, c, n, s in INVERTED_RESIDUAL_SETTING:
        oup = _make_divisible(c * width_multiplier)
        for i in range(n):
            hidden = inp * t
            if t != 1:
                convs.append(ConvSpec(unit, inp, hidden, 1, 1))
            convs.append(ConvSpec(unit, hidden, hidden, 3, s if i == 0 else 1, groups=hidden))
            stride = s if i == 0 else 1
            convs.append(ConvSpec(unit, hidden, oup, 1, 1, relu=False,
                                  residual=stride == 1 and inp == oup))
            inp = oup
            unit += 1
    last = _make_divisible(FEATURE_DIM * max(1.0, width_multiplier))
    convs.append(ConvSpec(unit, inp, last, 1, 1))
    return convs


def _conv_out(size: int, kernel: int, stride: int) -> int:
    pad = (kernel - 1) // 2
    return (size + 2 * pad - kernel) // stride + 1


def backbone_params(width_multiplier: float = 1.0) -> int:
    """Conv weights (bias-free) plus batch-norm scale and shift per conv."""
    return sum(c.out_ch * (c.in_ch // c.groups) * c.kernel ** 2 + 2 * c.out_ch
               for c in backbone_convs(width_multiplier))


def lstm_params(input_size: int, hidden: int, layers: int, bidirectional: bool) -> int:
    dirs = 2 if bidirectional else 1
    total = 0
    for layer in range(layers):
        i = input_size if layer == 0 else hidden * dirs
        total += dirs * 4 * hidden * (i + hidden + 2)
    return total


def head_params(cfg: ModelConfig) -> int:
    return cfg.lstm_hidden * cfg.directions * cfg.num_classes + cfg.num_classes


def count_params(cfg: ModelConfig) -> int:
    return (backbone_params(cfg.width_multiplier)
            + lstm_params(cfg.feature_dim, cfg.lstm_hidden, cfg.lstm_layers, cfg.bidirectional)
            + head_params(cfg))


def backbone_flops_per_frame(d: int, width_multiplier: float = 1.0,
                             include_elementwise: bool = False) -> int:
    """Convolution MACs for one d x d frame.

    With ``include_elementwise`` the count also charges batch-norm (2 per
    element), clipped-ReLU (1), residual adds (1) and global pooling (1).
    """
    size = d
    total = 0
    for c in backbone_convs(width_multiplier):
        size = _conv_out(size, c.kernel, c.stride)
        elems = size * size * c.out_ch
        total += elems * (c.in_ch // c.groups) * c.kernel ** 2
        if include_elementwise:
            total += 2 * elems + (elems if c.relu else 0)
            if c.residual:
                total += elems
    if include_elementwise:
        total += size * size * c.out_ch
    return total


def recurrent_flops_per_frame(cfg: ModelConfig) -> int:
    """Gate MACs of every LSTM layer and direction, plus the linear head, per frame."""
    dirs = cfg.directions
    H = cfg.lstm_hidden
    total = 0
    for layer in range(cfg.lstm_layers):
        i = cfg.feature_dim if layer == 0 else H * dirs
        total += dirs * 4 * H * (i + H)
    return total + H * dirs * cfg.num_classes


def count_flops(cfg: ModelConfig, T: int | None = None, include_elementwise: bool = False) -> int:
    """Total FLOPs for one sequence of ``T`` frames (defaults to ``cfg.T``)."""
    T = cfg.T if T is None else T
    per_frame = (backbone_flops_per_frame(cfg.d, cfg.width_multiplier, include_elementwise)
                 + recurrent_flops_per_frame(cfg))
    return T * per_frame


# Hyper-parameter grid with the reference parameter/FLOP/PCE columns it was
# published with (params in 1e6, FLOPs in 1e9, PCE after 10k iterations).
ABLATION_GRID = (
    dict(config=0, d=224, T=32, batch=6, pretrained=True, N=2, H=128, bi=True, ref_params=4.07, ref_flops=10.32, ref_pce=66.8),
    dict(config=1, d=224, T=32, batch=6, pretrained=False, N=2, H=128, bi=True, ref_params=4.07, ref_flops=10.32, ref_pce=1.5),
    dict(config=2, d=224, T=32, batch=6, pretrained=True, N=2, H=128, bi=False, ref_params=3.08, ref_flops=10.26, ref_pce=54.7),
    dict(config=3, d=192, T=32, batch=6, pretrained=True, N=2, H=128, bi=True, ref_params=4.07, ref_flops=7.62, ref_pce=45.7),
    dict(config=4, d=160, T=32, batch=6, pretrained=True, N=2, H=128, bi=True, ref_params=4.07, ref_flops=5.33, ref_pce=62.4),
    dict(config=5, d=128, T=32, batch=6, pretrained=True, N=2, H=128, bi=True, ref_params=4.07, ref_flops=3.45, ref_pce=57.7),
    dict(config=6, d=160, T=64, batch=6, pretrained=True, N=2, H=128, bi=True, ref_params=4.07, ref_flops=10.65, ref_pce=71.1),
    dict(config=7, d=160, T=32, batch=12, pretrained=True, N=2, H=128, bi=True, ref_params=4.07, ref_flops=5.33, ref_pce=70.1),
    dict(config=8, d=224, T=32, batch=6, pretrained=True, N=1, H=128, bi=True, ref_params=3.67, ref_flops=10.39, ref_pce=69.4),
    dict(config=9, d=224, T=32, batch=6, pretrained=True, N=2, H=64, bi=True, ref_params=3.01, ref_flops=10.26, ref_pce=66.9),
    dict(config=10, d=224, T=32, batch=6, pretrained=True, N=2, H=256, bi=True, ref_params=6.96, ref_flops=10.51, ref_pce=69.3),
)

# Final configuration: d=160, T=64, one bidirectional layer of 256, first 10 units frozen.
BASELINE = dict(d=160, T=64, N=1, H=256, bi=True, freeze_k=10, batch=24,
                ref_params=5.38, ref_flops=10.92, ref_pce=76.1, ref_pce_six=91.8)

# Test-time sequence length -> reference GFLOPs for the baseline.
SEQ_LENGTH_FLOPS = {64: 10.92, 32: 5.41, 16: 2.70, 8: 1.35, 4: 0.68}


def grid_model_config(row: dict, freeze_k: int = 0) -> ModelConfig:
    return ModelConfig(d=row["d"], T=row["T"], lstm_layers=row["N"], lstm_hidden=row["H"],
                       bidirectional=row["bi"], pretrained=row.get("pretrained", False),
                       freeze_k=row.get("freeze_k", freeze_k))
