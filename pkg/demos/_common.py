"""Shared helper: where the demos write their artefacts."""

import sys
import tempfile
from pathlib import Path


def output_dir(name: str) -> Path:
    """First command-line argument, or a fresh temporary directory."""
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="buildmon-"))
    out = root / name
    out.mkdir(parents=True, exist_ok=True)
    return out
