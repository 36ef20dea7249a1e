"""Axis-aligned box geometry: IoU, the complete-IoU regression loss with its
analytic gradient, and anchor-free decoding of per-cell predictions.

Boxes are center format ``(cx, cy, w, h)`` in continuous pixel coordinates.
The loss is ``1 - IoU + rho^2/c^2 + alpha*v`` where ``rho`` is the center
distance, ``c`` the enclosing-box diagonal, ``v`` the squared arctan
aspect-ratio gap scaled by ``4/pi^2``, and ``alpha = v / ((1 - IoU) + v)``.
``alpha`` is treated as a constant during differentiation (the standard
stability convention), and the gradient at a subgradient kink (corner or
boundary ties between the two boxes) is one-sided and flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBox, InvalidPrediction
from .ops import sigmoid

__all__ = [
    "BBox",
    "GridCellPred",
    "iou",
    "ciou_terms",
    "ciou_loss",
    "ciou_grad",
    "decode_anchor_free",
]


@dataclass(frozen=True)
class BBox:
    """Center-format box with strictly positive width and height."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBox(f"box has non-finite fields: {vals}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBox(f"box sides must be positive, got w={self.w}, h={self.h}")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1)."""
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    @property
    def area(self) -> float:
        return self.w * self.h

    def shifted(self, dx: float, dy: float) -> "BBox":
        return BBox(self.cx + dx, self.cy + dy, self.w, self.h)

    def scaled(self, s: float) -> "BBox":
        return BBox(self.cx * s, self.cy * s, self.w * s, self.h * s)


@dataclass(frozen=True)
class GridCellPred:
    """Raw per-cell prediction ``(dx, dy, dw, dh)`` at a grid location."""

    gx: int
    gy: int
    stride: float
    raw: tuple[float, float, float, float]

    def __post_init__(self):
        if self.stride <= 0:
            raise InvalidPrediction(f"stride must be positive, got {self.stride}")
        if self.gx < 0 or self.gy < 0:
            raise InvalidPrediction(f"cell indices must be >= 0, got ({self.gx}, {self.gy})")
        if len(self.raw) != 4:
            raise InvalidPrediction(f"raw prediction must have 4 values, got {len(self.raw)}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union in [0, 1]; 0 for disjoint boxes."""
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # areas from the same corner values, so identical boxes give exactly 1.0
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    return inter / (area_a + area_b - inter)


def ciou_terms(pred: BBox, gt: BBox) -> tuple[float, float, float, float]:
    """The loss ingredients ``(iou, rho2/c2, v, alpha)``.

    Exposed so callers (and gradient oracles) can rebuild the loss with
    ``alpha`` frozen, matching the constant-``alpha`` differentiation
    convention of :func:`ciou_grad`.
    """
    overlap = iou(pred, gt)
    px0, py0, px1, py1 = pred.corners
    gx0, gy0, gx1, gy1 = gt.corners
    rho2 = (pred.cx - gt.cx) ** 2 + (pred.cy - gt.cy) ** 2
    cw = max(px1, gx1) - min(px0, gx0)
    ch = max(py1, gy1) - min(py0, gy0)
    c2 = cw * cw + ch * ch
    v = (4.0 / math.pi**2) * (math.atan(gt.w / gt.h) - math.atan(pred.w / pred.h)) ** 2
    alpha = 0.0 if v == 0.0 else v / ((1.0 - overlap) + v)
    return overlap, rho2 / c2, v, alpha


def ciou_loss(pred: BBox, gt: BBox) -> float:
    """Complete-IoU loss; zero iff the boxes coincide, symmetric, invariant
    under joint translation and joint uniform scaling."""
    overlap, center_term, v, alpha = ciou_terms(pred, gt)
    return (1.0 - overlap) + center_term + alpha * v


def ciou_grad(pred: BBox, gt: BBox) -> tuple[np.ndarray, bool]:
    """Gradient of :func:`ciou_loss` w.r.t. ``(cx, cy, w, h)`` of ``pred``.

    ``alpha`` is held constant.  Returns ``(grad, at_kink)``; when the boxes
    touch or share a corner coordinate exactly, the max/min selections tie,
    the reported gradient is one-sided and ``at_kink`` is True.
    """
    px0, py0, px1, py1 = pred.corners
    gx0, gy0, gx1, gy1 = gt.corners
    at_kink = px0 == gx0 or px1 == gx1 or py0 == gy0 or py1 == gy1

    # d corner / d (cx, cy, w, h), rows: x0, x1 and y0, y1
    # x0 = cx - w/2, x1 = cx + w/2, y0 = cy - h/2, y1 = cy + h/2

    # intersection
    iw = min(px1, gx1) - max(px0, gx0)
    ih = min(py1, gy1) - max(py0, gy0)
    grad = np.zeros(4)
    overlap = 0.0
    if iw > 0 and ih > 0:
        inter = iw * ih
        union = pred.area + gt.area - inter
        overlap = inter / union
        diw_dx1 = 1.0 if px1 < gx1 else 0.0
        diw_dx0 = -1.0 if px0 > gx0 else 0.0
        dih_dy1 = 1.0 if py1 < gy1 else 0.0
        dih_dy0 = -1.0 if py0 > gy0 else 0.0
        # dI/d(cx, cy, w, h) via corners
        di = np.array(
            [
                ih * (diw_dx0 + diw_dx1),
                iw * (dih_dy0 + dih_dy1),
                ih * (-0.5 * diw_dx0 + 0.5 * diw_dx1),
                iw * (-0.5 * dih_dy0 + 0.5 * dih_dy1),
            ]
        )
        darea = np.array([0.0, 0.0, pred.h, pred.w])
        du = darea - di
        grad += -(di * union - inter * du) / union**2  # d(-IoU)
    else:
        if iw == 0 or ih == 0:
            at_kink = True
        overlap = 0.0

    # center-distance term rho^2 / c^2
    rho2 = (pred.cx - gt.cx) ** 2 + (pred.cy - gt.cy) ** 2
    cw = max(px1, gx1) - min(px0, gx0)
    ch = max(py1, gy1) - min(py0, gy0)
    c2 = cw * cw + ch * ch
    drho2 = np.array([2 * (pred.cx - gt.cx), 2 * (pred.cy - gt.cy), 0.0, 0.0])
    dcw_dx1 = 1.0 if px1 > gx1 else 0.0
    dcw_dx0 = -1.0 if px0 < gx0 else 0.0
    dch_dy1 = 1.0 if py1 > gy1 else 0.0
    dch_dy0 = -1.0 if py0 < gy0 else 0.0
    dc2 = np.array(
        [
            2 * cw * (dcw_dx0 + dcw_dx1),
            2 * ch * (dch_dy0 + dch_dy1),
            2 * cw * (-0.5 * dcw_dx0 + 0.5 * dcw_dx1),
            2 * ch * (-0.5 * dch_dy0 + 0.5 * dch_dy1),
        ]
    )
    grad += (drho2 * c2 - rho2 * dc2) / c2**2

    # aspect-ratio term alpha * v, alpha frozen
    gap = math.atan(gt.w / gt.h) - math.atan(pred.w / pred.h)
    v = (4.0 / math.pi**2) * gap * gap
    alpha = 0.0 if v == 0.0 else v / ((1.0 - overlap) + v)
    denom = pred.w**2 + pred.h**2
    dv_dw = -(8.0 / math.pi**2) * gap * pred.h / denom
    dv_dh = (8.0 / math.pi**2) * gap * pred.w / denom
    grad += alpha * np.array([0.0, 0.0, dv_dw, dv_dh])

    return grad, at_kink


def decode_anchor_free(p: GridCellPred) -> BBox:
    """Turn raw cell outputs into a box: sigmoid offsets place the center
    inside the cell, exponential terms size the box in stride units."""
    raw = np.asarray(p.raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise InvalidPrediction(f"raw prediction contains non-finite values: {p.raw}")
    dx, dy, dw, dh = raw
    off = sigmoid(np.array([dx, dy]))
    return BBox(
        cx=(p.gx + off[0]) * p.stride,
        cy=(p.gy + off[1]) * p.stride,
        w=math.exp(dw) * p.stride,
        h=math.exp(dh) * p.stride,
    )
