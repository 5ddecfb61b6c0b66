"""
From pixels to pose: training the heatmap stage
===============================================

A small convolutional backbone downsamples the image; three stride-2
transposed convolutions upsample back to heatmap resolution, emitting
one w x h x d voxel distribution per joint.  Supervision goes straight
through the soft-argmax decode: L1 on decoded coordinates, no explicit
heatmap targets.  Here the net memorizes a handful of rendered frames.
"""

import numpy as np

from pose3d.core.types import PoseObservation
from pose3d.datagen import (
    MotionGenConfig,
    default_camera,
    default_skeleton,
    generate_motion,
    project,
    render_stick_figure,
)
from pose3d.stage1 import (
    HeatmapGrid,
    Stage1Config,
    build_stage1,
    fit_stage1,
    stage1_forward,
)

skel = default_skeleton()
cam = default_camera()
seq = generate_motion(skel, MotionGenConfig(frames=12, seed=2))

# 32 px inputs, 16 x 16 x 8 heatmaps (the head upsamples 4 -> 32 by 2^3)
grid = HeatmapGrid(w=16, h=16, d=8, depth_range_mm=1500.0, image_w=32, image_h=32)
cfg = Stage1Config(
    joints=17,
    root_index=skel.root_index,
    image_h=32,
    image_w=32,
    backbone=((8, 2), (16, 2), (16, 2), (32, 2)),
    head_channels=(32, 16),
    grid=grid,
)
net = build_stage1(cfg, seed=0)
print(f"network parameters: {sum(p.value.size for p in net.params())}")

images, targets = [], []
scale = np.array([32.0 / cam.image_w, 32.0 / cam.image_h])
for fr in seq.frames:
    abs_pose = fr.gt.coords_mm + fr.root_abs_mm
    images.append(render_stick_figure(cam, skel, abs_pose, image_size=(32, 32)).values)
    obs = project(cam, abs_pose, root_index=skel.root_index)
    targets.append(PoseObservation(uv=obs.uv * scale, depth_mm=obs.depth_mm))
images = np.stack(images)


def decode_error():
    uv, z = [], []
    for img, tgt in zip(images, targets):
        _, dec = stage1_forward(net, img)
        uv.append(np.linalg.norm(dec.uv - tgt.uv, axis=-1).mean())
        z.append(np.abs(dec.depth_mm - tgt.depth_mm).mean())
    return float(np.mean(uv)), float(np.mean(z))


uv0, z0 = decode_error()
print(f"before training: uv error {uv0:5.2f} px, depth error {z0:6.1f} mm")

hist = fit_stage1(net, images, targets, epochs=400, batch_size=4, lr=3e-3,
                  lr_decay=0.995, seed=0, log_every=100)

uv1, z1 = decode_error()
print(f"after training:  uv error {uv1:5.2f} px, depth error {z1:6.1f} mm")
print(f"(one heatmap bin is {32 / grid.w:.0f} px in xy and {grid.depth_range_mm / grid.d:.1f} mm in z)")
