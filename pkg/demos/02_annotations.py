# %% [markdown]
# # Polygons, masks and dataset manifests
#
# Ground truth comes as boxes and polygons. Polygons are rasterized by testing
# pixel centres, so a mask covers the pixels whose centre falls inside.

# %%
import numpy as np

from buildmon.annotations import BBox, SceneAnnotation, Stage, load_dataset, rasterize_polygon, save_dataset
from buildmon.synthetic import fixture_scene
from buildmon.raster import save_image
from _common import output_dir

out = output_dir("annotations")

# %% [markdown]
# A right triangle with legs of 20 px has area 200. The pixel-centre count is
# close to it and converges as the polygon grows.

# %%
tri = [[0, 0], [20, 0], [0, 20]]
print(rasterize_polygon(tri, 32, 32).values.sum())

# %% [markdown]
# Invalid polygons are rejected with a reason.

# %%
try:
    rasterize_polygon([[0, 0], [10, 10], [10, 0], [0, 10]], 16, 16)
except Exception as exc:
    print(type(exc).__name__, exc)

# %% [markdown]
# Write a one-scene manifest and read it back.

# %%
image, _ = fixture_scene("house")
save_image(out / "house.png", image)
ann = SceneAnnotation(
    "house",
    boxes=[BBox(20, 32, 36, 48, 1.0, Stage.ROOF_COMPLETED_HOUSE)],
    masks=[rasterize_polygon([[20, 32], [36, 32], [36, 48], [20, 48]], 64, 64, Stage.LANDSCAPING)],
)
save_dataset(out / "manifest.json", [(out / "house.png", ann)])
(_, loaded), = load_dataset(out / "manifest.json")
print(loaded.boxes, int(np.sum(loaded.masks[0].values)))
