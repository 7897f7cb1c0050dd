"""Gaussianize a skewed wet-surface-ratio sample and map it back.

Run with ``python demos/anamorphosis_demo.py``.
"""

import numpy as np

from gaenkf import anamorphosis as ga

rng = np.random.default_rng(2019)

# WSR values of a 50-member ensemble are bounded in [0, 1] and skewed
ratios = rng.beta(2.0, 5.0, size=50)
fn = ga.build(ratios)
z = fn.forward(ratios)

print(f"{len(fn.knots_physical)} knots, tail slopes "
      f"{fn.lower_tail_slope:.3f} / {fn.upper_tail_slope:.3f}")
print(f"physical: mean {ratios.mean():.3f}, std {ratios.std(ddof=1):.3f}")
print(f"gaussian: mean {z.mean():+.3f}, std {z.std(ddof=1):.3f}")

# an analysis increment in Gaussian space maps back to a ratio that stays ordered
shifted = fn.inverse(z + 0.5)
print("ordering preserved:", bool(np.all(np.argsort(shifted) == np.argsort(ratios))))
print("round-trip error:", float(np.max(np.abs(fn.inverse(z) - ratios))))
