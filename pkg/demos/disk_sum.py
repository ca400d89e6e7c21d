"""Sum two full-disk batteries and compare the result with the analytic disk of radius 7."""

import numpy as np

from flexsum.aggregator import TightnessConfig, aggregate
from flexsum.ders import Battery
from flexsum.oracle import analytic_disk_sum, covered

eps = 0.1
res = aggregate([Battery(3, 3), Battery(4, 4)], TightnessConfig(eps))
member = analytic_disk_sum([3, 4])

ang = np.deg2rad(np.arange(360))
rim = member.radius * np.column_stack((np.cos(ang), np.sin(ang)))
print(f"exact result: {len(res.blocks.blocks)} overlapping blocks")
print(f"rim points covered: {covered(res.blocks.blocks, rim).sum()} / {len(rim)}")

_, _, cells = res.cells()
far = np.hypot(np.abs(cells[:, :2]).max(axis=1), np.abs(cells[:, 2:]).max(axis=1)).max()
print(f"farthest cell corner from origin: {far:.4f} (disk radius 7, slack {far - 7:.4f})")
