from __future__ import annotations

from importlib import resources


def fixture_text(name: str) -> str:
    return resources.files("isaxcc").joinpath("fixtures", name).read_text()
