"""One stochastic EnKF analysis of a scalar parameter against the Kalman answer.

Run with ``python demos/single_analysis_demo.py``.
"""

import numpy as np

from gaenkf.enkf import enkf_update, exact_mean, perturb

prior_mean, prior_var = 2.0, 4.0
obs, obs_var = 5.0, 1.0
n = 2000

x = prior_mean + np.sqrt(prior_var) * np.random.default_rng(1).standard_normal((n, 1))
# the observation operator is the identity, so the equivalents are the controls
xa, diag = enkf_update(x, x, perturb([obs], [obs_var], n, 1, seed=2), [obs_var])

gain = prior_var / (prior_var + obs_var)
print(f"ensemble gain {diag.gain[0, 0]:.3f}   Kalman gain {gain:.3f}")
print(f"analysis mean {exact_mean(xa)[0]:.3f}   Kalman mean {prior_mean + gain * (obs - prior_mean):.3f}")
print(f"analysis var  {np.var(xa, ddof=1):.3f}   Kalman var  {(1 - gain) * prior_var:.3f}")
