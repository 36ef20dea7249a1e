"""Box geometry: IoU, the complete-IoU loss, and anchor-free decoding.

Walks the loss through three increasingly wrong predictions, shows the
analytic gradient pulling a box toward its target, and decodes raw
per-cell network outputs into boxes.

Run: ``python demos/box_regression.py``
"""

import numpy as np

from crackscope.boxes import BBox, GridCellPred, ciou_grad, ciou_loss, decode_anchor_free, iou

gt = BBox(cx=10.0, cy=10.0, w=6.0, h=4.0)
print(f"ground truth: center ({gt.cx}, {gt.cy}), {gt.w} x {gt.h}")

print("\n== loss anatomy ==")
cases = [
    ("exact", BBox(10.0, 10.0, 6.0, 4.0)),
    ("shifted", BBox(12.0, 11.0, 6.0, 4.0)),
    ("wrong aspect", BBox(10.0, 10.0, 4.0, 6.0)),
    ("far away", BBox(24.0, 10.0, 6.0, 4.0)),
]
for name, pred in cases:
    print(
        f"  {name:12s} iou={iou(pred, gt):.3f}"
        f"  ciou_loss={ciou_loss(pred, gt):.4f}"
    )

print("\n== gradient descent on the loss ==")
pred = BBox(14.0, 13.0, 3.0, 7.0)
step = 1.5
for it in range(300):
    grad, at_kink = ciou_grad(pred, gt)
    vec = np.array([pred.cx, pred.cy, pred.w, pred.h]) - step * grad
    vec[2:] = np.maximum(vec[2:], 0.1)
    pred = BBox(*vec)
    if it % 60 == 0 or it == 299:
        print(
            f"  step {it:3d}: center ({pred.cx:6.3f}, {pred.cy:6.3f})"
            f" size {pred.w:5.3f} x {pred.h:5.3f}  loss {ciou_loss(pred, gt):.5f}"
        )

print("\n== anchor-free decoding ==")
print("raw (dx, dy, dw, dh) -> box, cell (3, 2), stride 16:")
for raw in [(0.0, 0.0, 0.0, 0.0), (2.0, -2.0, 0.4, -0.4), (0.0, 0.0, np.log(2), 0.0)]:
    box = decode_anchor_free(GridCellPred(gx=3, gy=2, stride=16.0, raw=raw))
    print(
        f"  raw {np.array2string(np.array(raw), precision=2):28s}"
        f" -> center ({box.cx:6.2f}, {box.cy:6.2f}), {box.w:6.2f} x {box.h:6.2f}"
    )
print("the sigmoid offsets keep every center inside its own grid cell.")
