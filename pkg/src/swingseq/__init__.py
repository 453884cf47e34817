"""Golf swing sequencing: detect the eight swing events in trimmed clips."""
from .complexity import count_flops, count_params
from .dataset import (EventLabel, SplitAssignment, SwingAnnotation, corpus_stats, generate_splits,
                      load_corpus, save_corpus, tempo, validate_annotation)
from .evaluation import PceReport, cross_validate, pce, tolerance
from .inference import DetectionResult, detect_events, infer_timeline, sliding_windows
from .model import ModelConfig, SwingEventNet, build_model, freeze_layers, load_pretrained_backbone
from .preprocess import AugmentParams, FrameSequence, crop_resize_normalize, label_frames, sample_training_window
from .synthetic import SyntheticSwingConfig, generate_corpus, generate_swing_clip
from .training import TrainConfig, run_ablation, train, weighted_cross_entropy

__version__ = "0.1.0"
