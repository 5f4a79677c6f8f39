"""The deterministic augmentation grid: rotations x flips x resizes.

Thirty-six variants per sample. The interesting part is that resizing a
scale map is not plain resampling: diameters live in pixel units, so the
values are multiplied by the resize factor too.
"""

import numpy as np

from deepskel import geometry, synth

mask, _, _ = synth.draw_capsule(64, (32, 12), (32, 52), half_width=5.0)
image = synth.render_image(mask, np.random.default_rng(0))
scale_map = geometry.compute_scale_map(mask)

variants = geometry.augment(image, scale_map)
print(f"{len(variants)} variants "
      f"(4 rotations x 3 flips x {len(geometry.AugmentSpec().factors)} sizes)")

shapes = sorted({img.shape for img, _ in variants})
print("image shapes in the grid:", shapes)

base_max = scale_map.max()
for img, sm in variants:
    factor = img.shape[0] / image.shape[0]
    # values scale with geometry: a shape shrunk by 0.8 has 0.8x diameters
    assert np.isclose(sm.max(), base_max * round(factor, 1), atol=1e-6)
print(f"max scale follows the factor: {base_max:.0f} at 1.0, "
      f"{base_max * 0.8:.0f} at 0.8, {base_max * 1.2:.0f} at 1.2")

# Four 90-degree rotations compose to the identity, bit for bit.
spin = image
for _ in range(4):
    spin = np.rot90(spin)
print("four quarter-turns are the identity:", np.array_equal(spin, image))
