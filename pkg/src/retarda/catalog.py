"""Bundled example systems, stored as JSON documents next to this module."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from .rhsdsl import SpecError, SystemDef, system_from_document


def catalog_names() -> list[str]:
    root = resources.files(__package__) / "catalog"
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def catalog_document(name: str) -> dict:
    path = resources.files(__package__) / "catalog" / f"{name}.json"
    if not path.is_file():
        known = ", ".join(catalog_names())
        raise SpecError(f"unknown catalog entry {name!r} (known: {known})")
    return json.loads(path.read_text())


@lru_cache(maxsize=None)
def load_catalog(name: str) -> SystemDef:
    return system_from_document(catalog_document(name))
