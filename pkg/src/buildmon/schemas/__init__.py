"""Published JSON schemas for every file the package reads or writes."""

from __future__ import annotations

import functools
import json
from importlib import resources

import jsonschema
from referencing import Registry, Resource

from buildmon.errors import ParseError

NAMES = (
    "manifest",
    "predictions",
    "site_report",
    "height_report",
    "evaluation",
    "learning_curve",
    "pseudolabel_history",
    "mock_script",
    "splits",
    "scene_outputs",
    "config",
    "dataset_summary",
)


@functools.lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    if name not in NAMES:
        raise KeyError(name)
    text = resources.files(__package__).joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


@functools.lru_cache(maxsize=None)
def _registry() -> Registry:
    resources_ = [(load_schema(n)["$id"], Resource.from_contents(load_schema(n))) for n in NAMES]
    return Registry().with_resources(resources_)


def validate(document, name: str, source: str = "") -> None:
    """Raise ParseError naming the first offending record."""
    validator = jsonschema.Draft202012Validator(load_schema(name), registry=_registry())
    err = jsonschema.exceptions.best_match(validator.iter_errors(document))
    if err is not None:
        where = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        prefix = f"{source}: " if source else ""
        raise ParseError(f"{prefix}{name}{where or ''}: {err.message}")
