"""Verifying the hand-rolled backward pass against finite differences.

Every layer's gradient is derived by hand, so the whole graph is checked
numerically: nudge one parameter, measure the loss change, compare with
the analytic derivative. Run in 64-bit to keep the comparison sharp.
"""

import numpy as np

from deepskel import net, trainer

config = net.NetworkConfig(
    stages=(net.StageSpec(convs=((3, 3),)),
            net.StageSpec(convs=((3, 3),)),
            net.StageSpec(convs=((3, 4),), pool_after=False)),
    taps=(2, 3), in_channels=1, precision="f64")
model = net.init_model(config, seed=0)

# Zero-initialized heads produce uniform probabilities and vanishing head
# gradients, so nudge them off the degenerate point first.
rng = np.random.default_rng(0)
for name, p in model.params.items():
    if name.startswith("side"):
        p.kernels = rng.normal(0, 0.3, p.kernels.shape)
    elif name.startswith("fuse"):
        p.kernels = p.kernels + rng.normal(0, 0.1, p.kernels.shape)

image = rng.random((1, 16, 16))
z = rng.integers(0, 3, (16, 16)).astype(np.int8)
z[rng.random((16, 16)) < 0.6] = 0

_, grads = trainer.sample_loss_and_grads(model, image, z)

h = 1e-5
worst = 0.0
for name, p in model.params.items():
    flat, gflat = p.kernels.reshape(-1), grads[name][0].reshape(-1)
    for i in rng.choice(flat.size, min(5, flat.size), replace=False):
        orig = flat[i]
        flat[i] = orig + h
        lp = trainer.objective_value(model, image, z).total
        flat[i] = orig - h
        lm = trainer.objective_value(model, image, z).total
        flat[i] = orig
        fd = (lp - lm) / (2 * h)
        rel = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-8)
        worst = max(worst, rel)
    print(f"{name:14s} checked, worst relative error so far {worst:.2e}")

print(f"\nfull-graph worst relative error: {worst:.2e} (threshold 1e-4)")
assert worst < 1e-4
