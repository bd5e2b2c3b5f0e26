# %% [markdown]
# # How much labeled data is enough?
#
# Fit metric = a * log10(n) + b to (training-set size, metric) pairs and look
# for the point after which the curve stops growing.

# %%
import math

import numpy as np

from buildmon.metrics import fit_learning_curve, plot_data
from buildmon.synthetic import learning_curve_points

fit = fit_learning_curve([(n, 0.1 * math.log10(n) + 0.2) for n in (500, 2000, 8000, 32000)])
print(fit)

# %% [markdown]
# Noise of 0.01 still gives the slope to within a few percent.

# %%
rng = np.random.default_rng(2020)
ns = np.unique(np.logspace(2, 5, 40).astype(int))
print(fit_learning_curve([(n, 0.08 * math.log10(n) + 0.3 + rng.normal(0, 0.01)) for n in ns]).slope)

# %% [markdown]
# A curve that flattens after 25,000 samples.

# %%
points = learning_curve_points()
print(fit_learning_curve(points).plateau_n)
print(plot_data(points)[:3])
