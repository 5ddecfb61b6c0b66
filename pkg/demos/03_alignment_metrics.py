"""
Two evaluation protocols: MPJPE and P-MPJPE
===========================================

Protocol 1 is the mean per-joint Euclidean distance in mm.  Protocol 2
first removes the best similarity transform (scale, rotation, translation,
solved in closed form via SVD) and scores what is left, so it ignores
global pose and measures articulation only.
"""

import numpy as np

from pose3d.metrics import make_report, mpjpe, p_mpjpe, procrustes_align

rng = np.random.default_rng(3)
gt = rng.normal(0.0, 180.0, size=(17, 3))

# a prediction that is a rotated, scaled, shifted copy of the truth
angle = np.pi / 7
rot = np.array([
    [np.cos(angle), -np.sin(angle), 0.0],
    [np.sin(angle), np.cos(angle), 0.0],
    [0.0, 0.0, 1.0],
])
pred = 1.3 * gt @ rot.T + np.array([50.0, -20.0, 400.0])

print(f"protocol 1 (raw):     {mpjpe(pred, gt):8.2f} mm")
print(f"protocol 2 (aligned): {p_mpjpe(pred, gt):8.2e} mm")

tf, aligned = procrustes_align(pred, gt)
print(f"recovered scale {tf.scale:.4f} (applied 1.3, so inverse {1 / 1.3:.4f})")
trace = np.trace(tf.rotation @ rot)
print(f"recovered rotation undoes the applied one: trace(R_hat R) = {trace:.6f} (3 = exact)")

# articulation error survives alignment
pred2 = gt.copy()
pred2[9] += (30.0, 0.0, 0.0)  # one joint off by 3 cm
pred2 = 1.3 * pred2 @ rot.T + np.array([50.0, -20.0, 400.0])
print(f"\nwith one displaced joint: protocol 1 {mpjpe(pred2, gt):7.2f} mm, "
      f"protocol 2 {p_mpjpe(pred2, gt):5.2f} mm")

# reports aggregate whole sequences, weighted by frame count
preds = [rng.normal(0, 150, size=(40, 17, 3)), rng.normal(0, 150, size=(80, 17, 3))]
gts = [p + rng.normal(0, 20, size=p.shape) for p in preds]
report = make_report(preds, gts)
print("\n" + report.render_table())
