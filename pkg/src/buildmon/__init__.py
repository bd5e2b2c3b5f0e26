"""Deterministic core of a satellite building-construction monitoring pipeline."""

from buildmon.annotations import BBox, MaskGrid, SceneAnnotation, Stage
from buildmon.progress import SiteReport, StageGraph, assess_scene
from buildmon.raster import RasterImage, SunMetadata

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "MaskGrid",
    "RasterImage",
    "SceneAnnotation",
    "SiteReport",
    "Stage",
    "StageGraph",
    "SunMetadata",
    "assess_scene",
]
