"""A miniature end-to-end run: synthesize, train briefly, predict.

Uses small images and few iterations so it finishes in about a minute;
the point is the shape of the pipeline, not the score. The response map
is the probability that a pixel is skeleton at *any* scale; the scale map
is the expected diameter under the predicted class distribution.
"""

import numpy as np

from deepskel import data, inference, net, synth, trainer

spec = synth.SyntheticSpec(image_size=64, families=("capsule",),
                           num_images=20, shapes_per_image=1,
                           half_width_range=(3.0, 10.0), seed=0)
samples = synth.gen_samples(spec)

config = net.toy_config()
sched = net.compute_receptive_fields(config)
print("receptive fields:", sched.r)

dataset = data.SkeletonDataset(
    [(img, sm) for img, _, sm in samples[:16]], sched)
model = net.init_model(config, seed=0)

cfg = trainer.TrainConfig(batch_size=4, learning_rate=0.2, momentum=0.9,
                          weight_decay=2e-4, max_iterations=150, seed=0)
log = trainer.train(model, dataset, cfg)
print(f"loss {log[0]['total']:.4f} -> {log[-1]['total']:.4f} "
      f"over {len(log)} iterations")

image, _, scale_map = samples[-1]  # held out
response, pred_scale = inference.predict(
    model, np.asarray(image, np.float32)[None])
gt = scale_map > 0
print(f"mean response on skeleton {response[gt].mean():.3f} "
      f"vs background {response[~gt].mean():.3f}")

thin = inference.nms_thin(response)
print(f"thinned response keeps {np.count_nonzero(thin)} candidate pixels")
on = thin > thin.max() * 0.9
if on.any():
    print(f"predicted scale on strong ridge pixels: "
          f"mean {pred_scale[on].mean():.1f} "
          f"(true diameters span {scale_map[gt].min():.0f}"
          f"-{scale_map[gt].max():.0f})")
