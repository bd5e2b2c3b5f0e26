# %% [markdown]
# # Building height from a shadow
#
# With the sun at elevation e, a building of height h casts a shadow of length
# h / tan(e). We measure the shadow along the anti-solar direction from the
# building footprint and convert to floors.

# %%
import numpy as np

from buildmon.height import HeightMethod, estimate_height, nir_shadow_baseline
from buildmon.raster import SunMetadata
from buildmon.synthetic import fixture_scene

image, outputs = fixture_scene("frame")
print(image.sun)

# %% [markdown]
# The shadow here is 12 px at 0.5 m/px, so 6 m, and tan 45 = 1 gives 6 m = 2 floors.

# %%
shadow = outputs.shadow[0]
print(estimate_height(shadow, outputs.footprint, image.sun, image.resolution))

# %% [markdown]
# Without a segmentation model, dark NIR pixels make a simple shadow baseline.

# %%
baseline = nir_shadow_baseline(image, 0.2)
print(estimate_height(baseline, outputs.footprint, image.sun, image.resolution, method=HeightMethod.NIR_THRESHOLD))

# %% [markdown]
# A low sun stretches the same building's shadow.

# %%
footprint = [[20, 100], [30, 100], [30, 110], [20, 110]]
low = np.zeros((128, 128))
low[100 - 22:100, 20:30] = 1.0  # 11 m of shadow for a 3 m building at 15 degrees
print(estimate_height(low, footprint, SunMetadata(180.0, 15.0), 0.5))
