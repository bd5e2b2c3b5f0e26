# %% [markdown]
# # Tiling a scene and simulating coarser imagery
#
# Large satellite scenes are cut into fixed-size tiles for the models, and the
# per-tile probabilities are stitched back together. Inference also runs on
# coarser imagery than training, which we simulate with a box filter.

# %%
import numpy as np

from buildmon.raster import degrade_resolution, predict_tiled, tile_scene
from buildmon.synthetic import fixture_scene

image, _ = fixture_scene("house")
print(image.width, image.height, image.resolution, image.channels)

# %% [markdown]
# Tiles of 24 px with 8 px overlap. The last row and column are shifted inward,
# so no tile is padded.

# %%
tiles = tile_scene(image, 24, overlap=8, parent_id="house")
print(len(tiles), [t.origin for t in tiles[:4]])

# %% [markdown]
# A "model" that returns the mean of the red band per pixel. Stitching averages
# overlapping tiles, so a per-pixel model gives back exactly the full-scene answer.

# %%
red = lambda tile: tile.data[0]
stitched = predict_tiled(red, image, 24, overlap=8)
print(np.abs(stitched - image.data[0]).max())

# %% [markdown]
# From 0.5 m/px to 1.0 m/px: half the pixels in each direction, same mean.

# %%
coarse = degrade_resolution(image, 1.0)
print(coarse.width, coarse.height, image.data.mean(), coarse.data.mean())
