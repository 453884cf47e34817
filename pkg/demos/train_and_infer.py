"""
Train, infer and score on a small synthetic corpus
==================================================

A compressed version of the full pipeline that finishes in a few minutes on
a CPU. The model is too briefly trained to score well; the point is the flow
of data between the stages.
"""

import warnings

import numpy as np
import torch

from swingseq.dataset import generate_splits
from swingseq.evaluation import pce, report_csv
from swingseq.inference import detect_events, infer_timeline, timeline_csv
from swingseq.model import ModelConfig, build_model
from swingseq.preprocess import MemoryFrameSource
from swingseq.synthetic import CorpusRanges, generate_corpus
from swingseq.training import TrainConfig, train

warnings.simplefilter("ignore", UserWarning)  # d=64 is smaller than the usual input sizes

# twelve clips drawn from six synthetic source videos
anns, clips = generate_corpus(12, seed=0, n_sources=6, ranges=CorpusRanges(backswing=(30, 40), image_size=64))
frames = MemoryFrameSource(clips)
split = generate_splits(anns, n_folds=3, seed=0)
train_ids, val_ids = split.training_ids(0), split.validation_ids(0)
print(f"{len(train_ids)} training clips, {len(val_ids)} held out")

# a light model: narrow backbone, short windows
torch.manual_seed(0)
model = build_model(ModelConfig(d=64, T=16, lstm_hidden=32, width_multiplier=0.5))
report = train(model, anns, frames, TrainConfig(batch_size=4, iterations=60, seed=0), sample_ids=train_ids)
smooth = report.smoothed(10)
print(f"loss {smooth[0]:.3f} -> {smooth[-1]:.3f} in {report.wall_time_s:.0f}s")

# sliding-window inference over whole clips, then per-event argmax
held_out = [a for a in anns if a.sample_id in set(val_ids)]
detections = []
for ann in held_out:
    timeline = infer_timeline(model, frames.load(ann.sample_id), ann.bbox, T=16)
    detections.append(detect_events(timeline, ann.sample_id))
print(timeline_csv(timeline[:3]), end="")
print("predicted", detections[-1].predicted_frames, "annotated", held_out[-1].event_frames)

print(report_csv(pce(detections, held_out), "demo"), end="")
print("mean confidence", np.mean([d.confidences for d in detections]).round(3))
