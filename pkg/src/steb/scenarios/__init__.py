"""Access to the scenario files bundled with the package."""

from importlib import resources

from ..config import parse_sections, scenario_from_sections
from ..harness import Scenario

__all__ = ["list_bundled", "load_bundled"]


def list_bundled():
    """Names of all bundled scenarios, sorted."""
    names = []
    for entry in resources.files(__name__).iterdir():
        if entry.name.endswith(".cfg"):
            names.append(entry.name[: -len(".cfg")])
    return sorted(names)


def load_bundled(name: str) -> Scenario:
    path = resources.files(__name__) / f"{name}.cfg"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return scenario_from_sections(parse_sections(path.read_text()), name)
