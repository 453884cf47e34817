"""
Sample-dependent tolerance and the PCE metric
=============================================

An event counts as found when the predicted frame lies within the sample's
tolerance of the annotated frame. The tolerance scales with the
Address-to-Impact duration, so slow-motion clips get a wider window.
"""

from swingseq.dataset import SwingAnnotation
from swingseq.evaluation import TABLE_COLUMNS, pce, tolerance
from swingseq.inference import DetectionResult

real_time = SwingAnnotation("rt", "v1", 80, [10, 20, 25, 32, 36, 40, 46, 60], (0.1, 0.1, 0.8, 0.8))
slow = SwingAnnotation("sm", "v2", 400, [20, 80, 110, 170, 195, 215, 250, 330], (0.1, 0.1, 0.8, 0.8),
                       slow_motion=True)
for ann in (real_time, slow):
    span = ann.event_frames[5] - ann.event_frames[0]
    print(f"{ann.sample_id}: Address->Impact {span} frames at 30 fps -> tolerance {tolerance(ann, 30)}")

# every prediction is 3 frames late
detections = [DetectionResult([f + 3 for f in a.event_frames], [1.0] * 8, a.sample_id) for a in (real_time, slow)]
report = pce(detections, [real_time, slow], f=30)

# the real-time clip tolerates 1 frame, the slow-motion clip 7
print(",".join(TABLE_COLUMNS))
print(",".join(f"{v:.0f}" for v in report.table_row()))
for name, stratum in report.per_stratum.items():
    print(f"{name}: {stratum['overall_pce']:.0f}%")
