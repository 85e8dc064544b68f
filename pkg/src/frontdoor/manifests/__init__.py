"""Audit manifests shipped with the package."""

from importlib import resources
from pathlib import Path

BUILTIN = ("german_credit",)


def manifest_path(name: str) -> Path:
    if name not in BUILTIN:
        raise KeyError(f"unknown builtin manifest {name!r}; choose from {BUILTIN}")
    return Path(str(resources.files(__name__).joinpath(f"{name}.json")))
