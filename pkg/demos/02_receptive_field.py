"""
Receptive fields of the dilated temporal ConvNet
================================================

The refiner stacks an input convolution of width W with B residual blocks
whose dilated convolutions widen the temporal span by a factor of W each.
One output frame therefore sees exactly W**(B+1) input frames.  The claim
is checked empirically: poke one input frame, count which outputs move.
"""

import numpy as np

from pose3d.stage2 import TemporalModelConfig, build_model, receptive_field, temporal_forward

for w, b in ((1, 2), (3, 2), (3, 3), (3, 4)):
    cfg = TemporalModelConfig(
        joints=17,
        kernel_size=w,
        num_blocks=b,
        channels=16,
        dropout_rate=0.0,
        padding_mode="valid",
    )
    rf = receptive_field(cfg)
    model = build_model(cfg, seed=0)

    # long enough that the footprint of an interior frame is not clipped
    t = 2 * rf + 4
    rng = np.random.default_rng(0)
    x = rng.normal(size=(t, 51))
    y0 = temporal_forward(model, x, mode="infer")
    x2 = x.copy()
    x2[rf - 1] += 10.0
    y1 = temporal_forward(model, x2, mode="infer")
    touched = int((np.abs(y1 - y0).max(axis=1) > 0).sum())
    print(f"W={w} B={b}: formula {rf:3d}, measured {touched:3d}, "
          f"valid output {y0.shape[0]} frames for {t} inputs")

# with replicate_edges padding the model emits one output per input frame,
# repeating the first and last frames to fill the shrinking valid region
cfg = TemporalModelConfig(joints=17, kernel_size=3, num_blocks=2, channels=16,
                          dropout_rate=0.0, padding_mode="replicate_edges")
model = build_model(cfg, seed=0)
y = temporal_forward(model, np.random.default_rng(1).normal(size=(40, 51)), mode="infer")
print(f"\nreplicate_edges: 40 input frames -> {y.shape[0]} output frames")
