import shutil
from pathlib import Path

import numpy as np
import pytest

from buildmon.raster import RasterImage, SunMetadata

FIXTURES = Path(__file__).parent / "data" / "fixtures"


@pytest.fixture
def fixtures(tmp_path) -> Path:
    """A private copy of the shipped synthetic fixture set."""
    dst = tmp_path / "fixtures"
    shutil.copytree(FIXTURES, dst)
    return dst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_image(width=8, height=6, value=None, resolution=0.5, sun=None, channels=("RED", "GREEN", "BLUE")):
    if value is None:
        data = np.random.default_rng(0).random((len(channels), height, width))
    else:
        data = np.full((len(channels), height, width), float(value))
    return RasterImage(data, channels, resolution, sun)


SUN_SOUTH = SunMetadata(azimuth_deg=180.0, elevation_deg=45.0)
