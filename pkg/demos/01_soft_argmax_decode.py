"""
Decoding joint coordinates from 3D heatmaps
===========================================

A heatmap head does not output coordinates, it outputs a discrete
distribution per joint over a w x h x d voxel grid.  The decode is the
expectation of that distribution over the bin-center lattice, which keeps
everything differentiable: no argmax, no quantization floor.
"""

import numpy as np

from pose3d.stage1 import HeatmapGrid, soft_argmax, softmax_per_joint, stage1_loss_grad

# an 8 x 8 x 4 grid tiling a 64 px image and a 1.5 m depth slab
grid = HeatmapGrid(w=8, h=8, d=4, depth_range_mm=1500.0, image_w=64, image_h=64)
print("x bin centers:", grid.x_centers())
print("z bin centers:", grid.z_centers())

# 1. a one-hot heatmap decodes to exactly that bin center
hm = np.zeros((1, 4, 8, 8))
hm[0, 2, 3, 6] = 1.0
obs = soft_argmax(hm, grid)
print(f"\none-hot at (ix=6, iy=3, iz=2) decodes to uv={obs.uv[0]}, z={obs.depth_mm[0]} mm")

# 2. spreading the same mass over neighbours moves the decode sub-bin
blur = np.zeros((1, 4, 8, 8))
blur[0, 2, 3, 6] = 0.7
blur[0, 2, 3, 5] = 0.3
obs = soft_argmax(blur, grid)
print(f"70/30 split across two x bins decodes to u={obs.uv[0, 0]:.1f} px (between centers)")

# 3. the decode agrees with the brute-force expectation
rng = np.random.default_rng(0)
probs = softmax_per_joint(rng.normal(size=(1, 4, 8, 8)))
obs = soft_argmax(probs, grid)
u_loop = sum(
    probs[0, k, i, j] * grid.x_centers()[j]
    for k in range(4)
    for i in range(8)
    for j in range(8)
)
print(f"\nrandom heatmap: decode u={obs.uv[0, 0]:.10f}, loop expectation {u_loop:.10f}")

# 4. the whole decode is differentiable: gradient-step raw logits toward a
# target coordinate and watch the L1 coordinate loss fall
logits = np.zeros((1, 4, 8, 8))  # uniform start, decode at the volume center
target_uv = np.array([[20.0, 44.0]])
target_z = np.array([0.0])
for step in range(300):
    loss, g = stage1_loss_grad(logits, grid, target_uv, target_z, mode="full3d")
    logits -= 100.0 * g
    if step % 75 == 0:
        print(f"step {step:3d}  coordinate L1 loss {loss:8.3f}")
obs = soft_argmax(softmax_per_joint(logits), grid)
print(f"after descent: decoded uv={np.round(obs.uv[0], 2)} (target {target_uv[0]})")
