"""
Side loss and the IoU bias toward larger boxes
==============================================

IoU rewards a box that overshoots its target more than one that falls short
by the same margin. The side penalty only charges the overshoot.
"""

from simcfs import BBox, iou, side_penalty
from simcfs.boxfit import asymmetry_demo

# a 100x100 target, boxes shrunk and grown by 10 px on every side
gt = BBox(0, 0, 100, 100)
under = BBox(10, 10, 90, 90)
over = BBox(-10, -10, 110, 110)

print(f"IoU under: {iou(under, gt):.6f}")
print(f"IoU over:  {iou(over, gt):.6f}")

# overhang per side, then the total
print("side penalty under:", side_penalty(under, gt))
print("side penalty over: ", side_penalty(over, gt))

# same numbers from the closed form
print(asymmetry_demo(100, 100, 10))

# the gap closes as the margin shrinks but never flips sign
for d in (20, 5, 1, 0.1):
    v = asymmetry_demo(100, 100, d)
    print(f"d={d:>5}: over - under = {v.iou_over - v.iou_under:.6f}")
