"""Access to the bundled case study data files."""

from __future__ import annotations

import json
from importlib import resources

from .model import Network, apply_damage, load_case
from .scenarios import DerPlacement, load_scenario

CASE_FILE = "ieee123_1ph.json"
UNIFORM_FILE = "uniform.json"
CLUSTERED_FILE = "clustered.json"
DAMAGE_FILE = "damage_windstorm.json"


def data_path(name: str):
    return resources.files("gridrestore.data") / name


def bundled_case() -> Network:
    return load_case(data_path(CASE_FILE))


def bundled_placement(name: str) -> DerPlacement:
    files = {"uniform": UNIFORM_FILE, "clustered": CLUSTERED_FILE}
    placement, _ = load_scenario(data_path(files[name]))
    return placement


def bundled_damage_ids() -> list[int]:
    raw = json.loads(data_path(DAMAGE_FILE).read_text())
    return [int(i) for i in raw["damaged_line_ids"]]


def bundled_damaged_case() -> Network:
    return apply_damage(bundled_case(), bundled_damage_ids())


def load_damage_file(path) -> list[int]:
    raw = json.loads(open(path).read() if isinstance(path, str) else path.read_text())
    return [int(i) for i in raw["damaged_line_ids"]]
