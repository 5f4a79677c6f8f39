"""Two downstream uses of skeletons with scales: parts and box rescoring.

A thinned skeleton splits at junctions into segments; each segment plus
its per-pixel scales reconstructs an object part as a union of maximal
disks. Part masks then rescore object-proposal boxes by how much
skeleton-supported mass each box captures.
"""

import numpy as np

from deepskel import applications, inference

# A T-shaped "prediction": response ridge plus a scale estimate per pixel.
response = np.zeros((48, 64))
response[24, 8:56] = 0.9      # horizontal bar
response[25:44, 32] = 0.8     # vertical stem
scales = np.where(response > 0, 9.0, 0.0)
scales[25:44, 32] = 5.0       # the stem is thinner

thin = inference.nms_thin(response)
binary = inference.threshold(thin, 0.5)
segments = applications.extract_segments(binary, scales, response)
print(f"{len(segments)} segments after junction splitting")

parts = [applications.reconstruct_part_mask(seg, response.shape)
         for seg in segments]
for seg, part in zip(segments, parts):
    print(f"  {len(seg.pixels):3d} skeleton px -> "
          f"{np.count_nonzero(part.mask):4d} mask px, "
          f"confidence {part.confidence:.2f}")

# Boxes covering a part keep their score; boxes touching no part drop to 0.
boxes = [
    {"x": 4, "y": 16, "w": 56, "h": 16, "score": 0.9},   # around the bar
    {"x": 26, "y": 22, "w": 12, "h": 24, "score": 0.7},  # around the stem
    {"x": 0, "y": 0, "w": 8, "h": 8, "score": 0.95},     # empty corner
]
for box in applications.objectness_rescore(boxes, [p.mask for p in parts]):
    print(f"box {box['w']}x{box['h']} at ({box['x']},{box['y']}): "
          f"{box['score']:.2f} -> {box['rescored']:.3f}")
