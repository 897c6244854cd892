import json
from importlib import resources

from ..world import WorldSpec
from .worldgen import generate_world


def bundled_world(name: str = "medium") -> WorldSpec:
    """Load a floor plan shipped with the package (``medium``: generated seed 2, 8 rooms)."""
    text = resources.files("semexplore").joinpath("data", f"{name}.json").read_text()
    return WorldSpec.from_dict(json.loads(text)).validate()
