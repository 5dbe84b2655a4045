"""Access to the scenario files shipped with the package."""

from __future__ import annotations

from importlib import resources

from .errors import ScenarioError

_PACKAGE = "canskew.scenarios"


def list_scenarios() -> list[str]:
    names = []
    for entry in resources.files(_PACKAGE).iterdir():
        if entry.name.endswith(".yaml"):
            names.append(entry.name[: -len(".yaml")])
    return sorted(names)


def load_bundled(name: str) -> str:
    path = resources.files(_PACKAGE) / f"{name}.yaml"
    if not path.is_file():
        raise ScenarioError(
            f"no bundled scenario {name!r}; available: {', '.join(list_scenarios())}"
        )
    return path.read_text(encoding="utf-8")
