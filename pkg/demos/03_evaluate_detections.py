"""
Scoring detections with mAP
===========================

A single box that covers 60% of its target counts as a hit up to IoU 0.6 and
a miss above, so the COCO-style average lands at 0.3.
"""

from simcfs import BBox
from simcfs.detmetrics import DetectionRecord, GroundTruthRecord, map_at, map_range

gts = [GroundTruthRecord("img", 0, BBox(0, 0, 10, 10))]
dets = [DetectionRecord("img", 0, BBox(0, 0, 10, 6), 0.9)]

print("mAP@0.5      ", map_at(dets, gts, 0.5).map_value)
report = map_range(dets, gts)
print("mAP@0.5:0.95 ", round(report.map_value, 6))
print(report.format_table(["chart"]))

# a duplicate detection is a false positive; it sits below the true hit
dets.append(DetectionRecord("img", 0, BBox(0, 0, 10, 10), 0.5))
print("with duplicate:", map_at(dets, gts, 0.5).map_value)

# over-detection: the share of matches whose box sticks out past its target
grown = [DetectionRecord("img", 0, BBox(-1, -1, 11, 11), 0.9)]
print("over-detection rate:", map_at(grown, gts, 0.5).over_detection_rate)
