"""Overlay PNG of masks and boxes drawn over a scene, for human review."""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from buildmon.annotations import Stage

STAGE_COLOURS = {
    Stage.PREPARATORY_WORK: (230, 159, 0),
    Stage.EXCAVATION: (86, 180, 233),
    Stage.FOUNDATION: (0, 158, 115),
    Stage.BASEMENT: (240, 228, 66),
    Stage.BUILDING_FRAME: (213, 94, 0),
    Stage.ROOF_COMPLETED_HOUSE: (204, 121, 167),
    Stage.LANDSCAPING: (0, 114, 178),
}
SHADOW_COLOUR = (40, 40, 120)


def render_overlay(image, detections=(), masks=None, polygons=(), alpha: float = 0.4,
                   caption: str = "") -> Image.Image:
    """Blend masks over the scene RGB and outline boxes and polygons.

    ``masks`` maps a Stage (or ``"shadow"``) to a binary grid.
    """
    rgb = (np.clip(image.rgb(), 0, 1) * 255).astype(np.float64)
    for key, mask in (masks or {}).items():
        colour = SHADOW_COLOUR if key == "shadow" else STAGE_COLOURS[Stage.parse(key)]
        m = np.asarray(getattr(mask, "values", mask)) >= 0.5
        rgb[m] = (1 - alpha) * rgb[m] + alpha * np.array(colour)
    out = Image.fromarray(rgb.round().astype(np.uint8), "RGB")
    draw = ImageDraw.Draw(out)
    for box in detections:
        draw.rectangle([box.x_min, box.y_min, box.x_max - 1, box.y_max - 1],
                       outline=STAGE_COLOURS[box.stage])
        draw.text((box.x_min + 1, box.y_min + 1), f"{box.score:.2f}", fill=STAGE_COLOURS[box.stage])
    for ring in polygons:
        pts = [tuple(map(float, p)) for p in np.asarray(ring)]
        draw.line(pts + [pts[0]], fill=(255, 255, 255))
    if caption:
        draw.text((2, 2), caption, fill=(255, 255, 255))
    return out


def save_overlay(path, *args, **kwargs) -> None:
    render_overlay(*args, **kwargs).save(path, format="PNG")
