"""Scenario files: parsing, demand scaling, and the bundled corridors.

A scenario is a JSON document describing the network (links, approaches,
turn proportions, signal plans), demand entries, named routes, and the
baseline controller parameters (coordination and fixed-time schedules).
Two corridors ship with the package: ``toy2`` (two four-phase
intersections with asymmetric demand) and ``corridor7`` (a stylized
seven-intersection arterial with synthetic volumes; three of its cross
streets are one-way).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Union

from . import baseline, microsim
from . import signal_core as sc
from .errors import SpecError

BUNDLED = ("toy2", "corridor7")


@dataclass(frozen=True)
class Scenario:
    name: str
    raw: dict
    network: microsim.NetworkSpec
    plans: Mapping[str, sc.RingBarrierPlan]
    coordination: Mapping[str, baseline.CoordinationPlan]
    fixed_time: Mapping[str, baseline.FixedTimeSchedule]

    @property
    def intersection_ids(self) -> tuple[str, ...]:
        return tuple(i.id for i in self.network.intersections)

    @property
    def routes(self) -> tuple[microsim.RouteSpec, ...]:
        return self.network.routes

    def d_max(self, intersection_id: str) -> float:
        for inter in self.network.intersections:
            if inter.id == intersection_id:
                return inter.d_max_s
        raise KeyError(intersection_id)


def scenario_from_dict(raw: Mapping) -> Scenario:
    raw = copy.deepcopy(dict(raw))
    network = microsim.parse_network(raw)
    plans = {i.id: sc.build_plan(i.plan_config) for i in network.intersections}
    coordination = {}
    fixed_time = {}
    for item in raw.get("intersections", []):
        iid = str(item["id"])
        if "coordination" in item:
            coordination[iid] = baseline.build_coordination(plans[iid], item["coordination"])
        if "fixed_time" in item:
            fixed_time[iid] = baseline.build_fixed_time(plans[iid], item["fixed_time"])
    return Scenario(
        name=network.name,
        raw=raw,
        network=network,
        plans=plans,
        coordination=coordination,
        fixed_time=fixed_time,
    )


def load_scenario(source: Union[str, Path, Mapping]) -> Scenario:
    """Load a scenario from a mapping, a file path, or a bundled name."""
    if isinstance(source, Mapping):
        return scenario_from_dict(source)
    text = None
    if isinstance(source, str) and source in BUNDLED:
        text = resources.files("atsclab").joinpath(f"scenarios/{source}.json").read_text()
    else:
        path = Path(source)
        if not path.exists():
            raise SpecError(f"scenario {source!r} is neither a bundled name nor a file")
        text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise SpecError(f"scenario {source!r} is not valid JSON: {err}") from None
    return scenario_from_dict(raw)


def scale_demand(scenario: Scenario, factor: float) -> Scenario:
    """Scale every entry's demand rate, keeping turn proportions fixed."""
    if factor <= 0.0:
        raise SpecError(f"volume scale factor must be > 0, got {factor}")
    raw = copy.deepcopy(scenario.raw)
    for entry in raw.get("entries", []):
        entry["rate_vph"] = float(entry["rate_vph"]) * factor
    return scenario_from_dict(raw)


def build_simulator(scenario: Scenario, seed: int) -> microsim.Simulator:
    return microsim.Simulator(scenario.network, seed=seed)


def with_full_phase_set(scenario: Scenario, timing: Optional[Mapping] = None) -> Scenario:
    """Variant with all eight phases enabled at every intersection.

    Movements keep their original phases; the added phases simply widen
    the action set (useful for action-space-size studies).
    """
    if timing is None:
        timing = {"min_green": 4.0, "yellow": 3.5, "red_clear": 1.5}
    raw = copy.deepcopy(scenario.raw)
    for item in raw.get("intersections", []):
        phases = item["plan"]["phases"]
        existing = {int(p) for p in phases}
        template = dict(timing)
        for p in range(1, 9):
            if p not in existing:
                phases[str(p)] = dict(template)
        item.pop("coordination", None)
        item.pop("fixed_time", None)
    name = raw.get("name", "scenario")
    raw["name"] = f"{name}-8phase"
    return scenario_from_dict(raw)
