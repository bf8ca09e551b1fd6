"""Why the comparison stage trims and corrects, shown on small numbers.

Run:  python demos/03_fdr_and_trimming.py

First a cell of twenty VFD values with one wild token: a single 2.5 SD pass
removes it. Then eighteen p-values from a family of contrasts where only a
few effects are real, adjusted with Benjamini-Hochberg.
"""

import numpy as np

from vowelmetrics.stats import Cell, fdr_adjust, trim_outliers, welch_t

cell = Cell("post_surgery/i", [0.30, 0.28, 0.35, 0.31, 0.29, 0.33, 0.27, 0.32, 0.30, 0.34,
                               0.31, 0.29, 0.30, 0.33, 0.28, 0.32, 0.31, 0.30, 0.29, 2.40])
(kept,), rep = trim_outliers([cell])
print(f"trimmed {rep.n_removed} of {rep.n_total}: {rep.removed_ids}")
print(f"cell mean {np.mean(cell.values):.3f} -> {np.mean(kept.values):.3f}\n")

rng = np.random.default_rng(5)
p = []
for k in range(18):
    shift = 1.2 if k < 3 else 0.0
    a, b = rng.normal(shift, 1, 11), rng.normal(0, 1, 11)
    p.append(welch_t(a, b, f"c{k}").p_raw)
q = fdr_adjust(p)
print(" k   p_raw   p_adj   real effect")
for k in np.argsort(p):
    print(f"{k:2d}  {p[k]:.4f}  {q[k]:.4f}   {'yes' if k < 3 else ''}")
print(f"\nraw p < 0.05: {sum(x < 0.05 for x in p)}   adjusted p < 0.05: {sum(x < 0.05 for x in q)}")
