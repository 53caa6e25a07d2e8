"""Deterministic 0.1 s corridor microsimulator.

The vehicle model is a spatial queue: vehicles travel at a link's free-flow
speed until they reach the back of the queue ahead, hold position while
queued, and discharge across the stop bar at the saturation headway once
their movement's phase shows green (startup lost time is charged once per
green period).  A full downstream link blocks discharge (spillback).
Per-vehicle delay is accrued each tick as the shortfall against free-flow
progress, and the delay carried into an approach resets at every stop-bar
crossing so downstream intersections only see newly accrued delay.

Everything runs on an integer tick grid with a single seeded RNG, so a
(spec, seed) pair reproduces bit-identical trajectories and metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import signal_core as sc
from .errors import SpecError

MOVEMENTS = ("left", "through", "right")

TICK = 0.1


# ---------------------------------------------------------------------------
# specification types


@dataclass(frozen=True)
class Defaults:
    jam_spacing_ft: float = 25.0
    saturation_headway_s: float = 1.9
    startup_lost_time_s: float = 2.0
    free_flow_speed_ftps: float = 51.3
    cv_range_ft: float = 1000.0
    detection_zone_ft: float = 40.0
    d_max_s: float = 240.0


@dataclass(frozen=True)
class LinkSpec:
    from_node: str
    to_node: str
    length_ft: float
    lanes: int
    speed_ftps: float

    @property
    def key(self) -> tuple[str, str]:
        return (self.from_node, self.to_node)


@dataclass(frozen=True)
class ApproachSpec:
    id: str
    from_node: str
    lane_movements: tuple[tuple[str, ...], ...]
    turns: Mapping[str, float]
    movement_phase: Mapping[str, int]
    destinations: Mapping[str, str]


@dataclass(frozen=True)
class IntersectionSpec:
    id: str
    plan_config: Mapping
    approaches: tuple[ApproachSpec, ...]
    cv_range_ft: float
    d_max_s: float


@dataclass(frozen=True)
class EntrySpec:
    node: str
    rate_vph: float


@dataclass(frozen=True)
class RouteSpec:
    name: str
    nodes: tuple[str, ...]


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    links: tuple[LinkSpec, ...]
    intersections: tuple[IntersectionSpec, ...]
    entries: tuple[EntrySpec, ...]
    routes: tuple[RouteSpec, ...]
    defaults: Defaults


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise SpecError(f"{path}: {message}")


def parse_network(raw: Mapping) -> NetworkSpec:
    """Validate a plain scenario mapping into a NetworkSpec.

    Raises SpecError carrying the offending field path.
    """
    defaults_raw = raw.get("defaults", {})
    known = {f for f in Defaults.__dataclass_fields__}
    for key in defaults_raw:
        _require(key in known, f"defaults.{key}", "unknown default")
    defaults = Defaults(**{k: float(v) for k, v in defaults_raw.items()})
    _require(defaults.jam_spacing_ft > 0, "defaults.jam_spacing_ft", "must be > 0")
    _require(defaults.saturation_headway_s > 0, "defaults.saturation_headway_s", "must be > 0")
    _require(defaults.startup_lost_time_s >= 0, "defaults.startup_lost_time_s", "must be >= 0")
    _require(defaults.d_max_s > 0, "defaults.d_max_s", "must be > 0")

    links = []
    seen_links = set()
    for i, item in enumerate(raw.get("links", [])):
        path = f"links[{i}]"
        link = LinkSpec(
            from_node=str(item["from"]),
            to_node=str(item["to"]),
            length_ft=float(item["length_ft"]),
            lanes=int(item.get("lanes", 1)),
            speed_ftps=float(item.get("speed_ftps", defaults.free_flow_speed_ftps)),
        )
        _require(link.length_ft > 0, f"{path}.length_ft", "must be > 0")
        _require(link.lanes >= 1, f"{path}.lanes", "must be >= 1")
        _require(link.speed_ftps > 0, f"{path}.speed_ftps", "must be > 0")
        _require(link.key not in seen_links, path, f"duplicate link {link.key}")
        seen_links.add(link.key)
        links.append(link)
    _require(bool(links), "links", "at least one link required")
    by_key = {l.key: l for l in links}

    intersections = []
    intersection_ids = set()
    for i, item in enumerate(raw.get("intersections", [])):
        path = f"intersections[{i}]"
        node = str(item["id"])
        _require(node not in intersection_ids, path, f"duplicate intersection {node}")
        intersection_ids.add(node)
        plan_config = dict(item["plan"])
        plan_config.setdefault("intersection_id", node)
        plan = sc.build_plan(plan_config)  # raises PlanError subclasses on bad plans
        approaches = []
        seen_from = set()
        for j, app in enumerate(item.get("approaches", [])):
            apath = f"{path}.approaches[{j}]"
            from_node = str(app["from"])
            _require((from_node, node) in by_key, apath,
                     f"no link {from_node}->{node} for this approach")
            _require(from_node not in seen_from, apath, "duplicate approach from-node")
            seen_from.add(from_node)
            link = by_key[(from_node, node)]
            lanes = tuple(tuple(str(m) for m in lane) for lane in app["lanes"])
            _require(len(lanes) == link.lanes, f"{apath}.lanes",
                     f"{len(lanes)} lane entries for a {link.lanes}-lane link")
            for lane in lanes:
                for m in lane:
                    _require(m in MOVEMENTS, f"{apath}.lanes", f"unknown movement {m!r}")
            turns = {str(k): float(v) for k, v in app["turns"].items()}
            for m in turns:
                _require(m in MOVEMENTS, f"{apath}.turns", f"unknown movement {m!r}")
            _require(abs(sum(turns.values()) - 1.0) <= 1e-9, f"{apath}.turns",
                     f"proportions sum to {sum(turns.values())}, not 1")
            phases = {str(k): int(v) for k, v in app.get("phases", {}).items()}
            dests = {str(k): str(v) for k, v in app.get("to", {}).items()}
            for m, p in turns.items():
                if p <= 0.0:
                    continue
                _require(any(m in lane for lane in lanes), f"{apath}.lanes",
                         f"movement {m!r} has demand but no permitted lane")
                _require(m in phases, f"{apath}.phases", f"movement {m!r} has no phase")
                _require(phases[m] in plan.enabled_phases, f"{apath}.phases",
                         f"movement {m!r} maps to disabled phase {phases[m]}")
                _require(m in dests, f"{apath}.to", f"movement {m!r} has no destination")
                _require((node, dests[m]) in by_key, f"{apath}.to",
                         f"no link {node}->{dests[m]}")
            approaches.append(ApproachSpec(
                id=str(app.get("id", from_node)),
                from_node=from_node,
                lane_movements=lanes,
                turns=turns,
                movement_phase=phases,
                destinations=dests,
            ))
        intersections.append(IntersectionSpec(
            id=node,
            plan_config=plan_config,
            approaches=tuple(approaches),
            cv_range_ft=float(item.get("cv_range_ft", defaults.cv_range_ft)),
            d_max_s=float(item.get("d_max_s", defaults.d_max_s)),
        ))

    declared_approaches = {
        (a.from_node, inter.id) for inter in intersections for a in inter.approaches
    }
    for link in links:
        if link.to_node in intersection_ids:
            _require(link.key in declared_approaches, f"links[{link.key}]",
                     "link ends at an intersection but is not a declared approach")

    entries = []
    for i, item in enumerate(raw.get("entries", [])):
        path = f"entries[{i}]"
        node = str(item["node"])
        rate = float(item["rate_vph"])
        _require(rate >= 0, f"{path}.rate_vph", "must be >= 0")
        _require(node not in intersection_ids, path,
                 f"entry node {node} must be a boundary node")
        outgoing = [l for l in links if l.from_node == node]
        _require(len(outgoing) == 1, path,
                 f"entry node {node} must have exactly one outgoing link")
        entries.append(EntrySpec(node=node, rate_vph=rate))

    routes = []
    for i, item in enumerate(raw.get("routes", [])):
        nodes = tuple(str(n) for n in item["nodes"])
        _require(len(nodes) >= 2, f"routes[{i}].nodes", "need at least two nodes")
        routes.append(RouteSpec(name=str(item["name"]), nodes=nodes))

    return NetworkSpec(
        name=str(raw.get("name", "network")),
        links=tuple(links),
        intersections=tuple(intersections),
        entries=tuple(entries),
        routes=tuple(routes),
        defaults=defaults,
    )


# ---------------------------------------------------------------------------
# runtime structures


class Vehicle:
    __slots__ = ("vid", "pos", "movement", "pending_movement", "entry_tick",
                 "total_delay", "delay_at_crossing", "path", "last_tick")

    def __init__(self, vid: int, pos: float, movement: Optional[str], entry_tick: int,
                 entry_node: str):
        self.vid = vid
        self.pos = pos
        self.movement = movement
        self.pending_movement: Optional[str] = None
        self.entry_tick = entry_tick
        self.total_delay = 0.0
        self.delay_at_crossing = 0.0
        self.path: list[tuple[str, int]] = [(entry_node, entry_tick)]
        self.last_tick = -1


class _Lane:
    __slots__ = ("vehicles", "next_allowed_tick", "movements", "index")

    def __init__(self, index: int, movements: tuple[str, ...]):
        self.index = index
        self.movements = movements
        self.vehicles: list[Vehicle] = []
        self.next_allowed_tick = 0


class _Link:
    __slots__ = ("spec", "length", "step", "lanes", "downstream_id", "approach")

    def __init__(self, spec: LinkSpec):
        self.spec = spec
        self.length = spec.length_ft
        self.step = spec.speed_ftps * TICK
        self.lanes = [_Lane(i, ()) for i in range(spec.lanes)]
        self.downstream_id: Optional[str] = None  # intersection id, if any
        self.approach: Optional["_Approach"] = None


class _Approach:
    __slots__ = ("id", "intersection_id", "link", "turn_items", "movement_phase",
                 "dest_links", "lanes_for_movement")

    def __init__(self, spec: ApproachSpec, intersection_id: str, link: _Link,
                 dest_links: dict[str, "_Link"]):
        self.id = spec.id
        self.intersection_id = intersection_id
        self.link = link
        # cumulative turn proportions in fixed movement order for sampling
        items = [(m, spec.turns[m]) for m in MOVEMENTS if spec.turns.get(m, 0.0) > 0.0]
        acc = 0.0
        cumulative = []
        for m, p in items:
            acc += p
            cumulative.append((m, acc))
        self.turn_items = tuple(cumulative)
        self.movement_phase = dict(spec.movement_phase)
        self.dest_links = dest_links
        self.lanes_for_movement = {
            m: tuple(i for i, lane in enumerate(spec.lane_movements) if m in lane)
            for m in MOVEMENTS
        }

    def sample_movement(self, u: float) -> str:
        for m, acc in self.turn_items:
            if u < acc:
                return m
        return self.turn_items[-1][0]


class _Intersection:
    __slots__ = ("id", "spec", "plan", "approaches", "cv_range", "d_max",
                 "green_onset", "detector_since", "phase_lanes")

    def __init__(self, spec: IntersectionSpec, plan: sc.RingBarrierPlan):
        self.id = spec.id
        self.spec = spec
        self.plan = plan
        self.approaches: list[_Approach] = []
        self.cv_range = spec.cv_range_ft
        self.d_max = spec.d_max_s
        self.green_onset: dict[int, Optional[int]] = {p: None for p in plan.enabled_phases}
        self.detector_since: dict[int, float] = {p: float("inf") for p in plan.enabled_phases}
        self.phase_lanes: dict[int, list[_Lane]] = {p: [] for p in plan.enabled_phases}


@dataclass(frozen=True)
class DetectorReadings:
    presence: Mapping[int, bool]
    since_actuation: Mapping[int, float]


@dataclass(frozen=True)
class ExitRecord:
    vid: int
    entry_tick: int
    exit_tick: int
    nodes: tuple[str, ...]
    node_ticks: tuple[int, ...]
    total_delay: float


@dataclass(frozen=True)
class CrossingRecord:
    intersection_id: str
    approach_id: str
    movement: str
    delay: float
    tick: int


@dataclass(frozen=True)
class RouteStat:
    n: int
    mean_travel_time: float


@dataclass(frozen=True)
class MovementStat:
    n: int
    mean_delay: float


@dataclass(frozen=True)
class MetricsRecord:
    routes: Mapping[str, RouteStat]
    movements: Mapping[tuple[str, str, str], MovementStat]
    mean_intersection_delay: Optional[float]
    spawned: int
    exited: int
    in_network: int


class Simulator:
    """Single-threaded corridor simulator; one instance per rollout/replicate."""

    def __init__(self, spec: NetworkSpec, seed: int = 0):
        self.spec = spec
        self.defaults = spec.defaults
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.clock_ticks = 0
        self.spawned = 0
        self.exited = 0
        self._next_vid = 0
        self.exit_records: list[ExitRecord] = []
        self.crossing_records: list[CrossingRecord] = []

        self.jam = spec.defaults.jam_spacing_ft
        self.headway_ticks = max(1, round(spec.defaults.saturation_headway_s / TICK))
        self.startup_ticks = round(spec.defaults.startup_lost_time_s / TICK)
        self.zone = spec.defaults.detection_zone_ft

        self.links: dict[tuple[str, str], _Link] = {l.key: _Link(l) for l in spec.links}
        self.link_order: list[_Link] = [self.links[l.key] for l in spec.links]
        self.plans: dict[str, sc.RingBarrierPlan] = {}
        self.intersections: dict[str, _Intersection] = {}
        for ispec in spec.intersections:
            plan = sc.build_plan(ispec.plan_config)
            self.plans[ispec.id] = plan
            self.intersections[ispec.id] = _Intersection(ispec, plan)

        for ispec in spec.intersections:
            inter = self.intersections[ispec.id]
            for aspec in ispec.approaches:
                link = self.links[(aspec.from_node, ispec.id)]
                dest_links = {
                    m: self.links[(ispec.id, node)] for m, node in aspec.destinations.items()
                }
                approach = _Approach(aspec, ispec.id, link, dest_links)
                link.downstream_id = ispec.id
                link.approach = approach
                inter.approaches.append(approach)
                for m, lane_ids in approach.lanes_for_movement.items():
                    phase = approach.movement_phase.get(m)
                    if phase is None:
                        continue
                    for li in lane_ids:
                        lane = link.lanes[li]
                        if lane not in inter.phase_lanes[phase]:
                            inter.phase_lanes[phase].append(lane)
                for lane, movements in zip(link.lanes, aspec.lane_movements):
                    lane.movements = movements

        self.entries: list[tuple[_Link, float, str]] = []
        self.source_queues: dict[str, list[Vehicle]] = {}
        for entry in spec.entries:
            link = next(l for l in self.link_order if l.spec.from_node == entry.node)
            probability = entry.rate_vph * TICK / 3600.0
            self.entries.append((link, probability, entry.node))
            self.source_queues[entry.node] = []

    # -- basic accounting ----------------------------------------------------

    @property
    def clock(self) -> float:
        return self.clock_ticks / 10.0

    def in_network(self) -> int:
        total = sum(len(lane.vehicles) for link in self.link_order for lane in link.lanes)
        total += sum(len(q) for q in self.source_queues.values())
        return total

    def conservation_ok(self) -> bool:
        return self.spawned == self.exited + self.in_network()

    # -- spawning --------------------------------------------------------------

    def _new_vehicle(self, link: _Link, node: str, tick: int) -> Vehicle:
        movement = None
        if link.approach is not None:
            movement = link.approach.sample_movement(self.rng.random())
        veh = Vehicle(self._next_vid, link.length, movement, tick, node)
        self._next_vid += 1
        self.spawned += 1
        return veh

    def _admit(self, link: _Link, veh: Vehicle) -> bool:
        lane = self._choose_lane(link, veh.movement, link.length)
        if lane is None:
            return False
        lane.vehicles.append(veh)
        return True

    def _choose_lane(self, link: _Link, movement: Optional[str], entry_pos: float):
        if link.approach is not None and movement is not None:
            candidates = link.approach.lanes_for_movement[movement]
        else:
            candidates = range(len(link.lanes))
        best = None
        best_key = None
        for i in candidates:
            lane = link.lanes[i]
            if lane.vehicles and lane.vehicles[-1].pos + self.jam > entry_pos:
                continue
            key = (len(lane.vehicles), i)
            if best_key is None or key < best_key:
                best, best_key = lane, key
        return best

    def spawn(self, dt: float = TICK) -> None:
        """One tick of demand: admit queued arrivals, then draw new ones.

        Vehicles that cannot enter wait in a per-entry source queue; their
        waiting delay is applied in one shot when they are admitted.
        """
        t = self.clock_ticks
        for link, probability, node in self.entries:
            queue = self.source_queues[node]
            if queue:
                veh = queue[0]
                if self._admit(link, veh):
                    queue.pop(0)
                    veh.total_delay += (t - veh.entry_tick) * TICK
            if probability > 0.0 and self.rng.random() < probability * (dt / TICK):
                veh = self._new_vehicle(link, node, t)
                if queue or not self._admit(link, veh):
                    queue.append(veh)

    # -- main tick ---------------------------------------------------------------

    def tick(self, displays: Mapping[str, Mapping[int, str]], dt: float = TICK) -> None:
        """Advance the traffic state one 0.1 s step under the given displays."""
        if abs(dt - TICK) > 1e-9:
            raise SpecError("tick dt must be 0.1 s")
        t = self.clock_ticks
        self.spawn()

        for inter in self.intersections.values():
            display = displays[inter.id]
            for phase in inter.plan.enabled_phases:
                if display.get(phase) == sc.GREEN:
                    if inter.green_onset[phase] is None:
                        inter.green_onset[phase] = t
                else:
                    inter.green_onset[phase] = None

        jam = self.jam
        for link in self.link_order:
            step = link.step
            length = link.length
            approach = link.approach
            boundary = approach is None
            if not boundary:
                inter = self.intersections[link.downstream_id]
                display = displays[inter.id]
            for lane in link.lanes:
                vehicles = lane.vehicles
                if not vehicles:
                    continue
                survivors: list[Vehicle] = []
                prev_pos: Optional[float] = None
                for veh in vehicles:
                    if veh.last_tick == t:
                        survivors.append(veh)
                        prev_pos = veh.pos
                        continue
                    target = veh.pos - step
                    if prev_pos is None and target <= 0.0:
                        if boundary:
                            self._finish(veh, link, t)
                            continue
                        if self._try_cross(veh, lane, approach, inter, display, target, t):
                            continue
                        new_pos = 0.0
                    else:
                        floor = prev_pos + jam if prev_pos is not None else 0.0
                        new_pos = target if target > floor else floor
                    moved = veh.pos - new_pos
                    # the 1e-9 guard keeps pure free-flow motion at exactly
                    # zero delay despite float cancellation in pos - step
                    if moved < step - 1e-9:
                        veh.total_delay += TICK * (1.0 - moved / step)
                    veh.pos = new_pos
                    survivors.append(veh)
                    prev_pos = new_pos
                lane.vehicles = survivors

        for inter in self.intersections.values():
            for phase, lanes in inter.phase_lanes.items():
                present = any(lane.vehicles and lane.vehicles[0].pos <= self.zone
                              for lane in lanes)
                inter.detector_since[phase] = 0.0 if present else inter.detector_since[phase] + TICK

        self.clock_ticks = t + 1

    def _finish(self, veh: Vehicle, link: _Link, t: int) -> None:
        veh.path.append((link.spec.to_node, t + 1))
        self.exited += 1
        nodes = tuple(n for n, _ in veh.path)
        ticks = tuple(k for _, k in veh.path)
        self.exit_records.append(ExitRecord(
            vid=veh.vid, entry_tick=veh.entry_tick, exit_tick=t + 1,
            nodes=nodes, node_ticks=ticks, total_delay=veh.total_delay,
        ))

    def _try_cross(self, veh: Vehicle, lane: _Lane, approach: _Approach,
                   inter: _Intersection, display: Mapping[int, str], target: float,
                   t: int) -> bool:
        phase = approach.movement_phase[veh.movement]
        if display.get(phase) != sc.GREEN:
            return False
        onset = inter.green_onset[phase]
        if onset is None or t < onset + self.startup_ticks or t < lane.next_allowed_tick:
            return False
        dest = approach.dest_links[veh.movement]
        if dest.approach is not None and veh.pending_movement is None:
            veh.pending_movement = dest.approach.sample_movement(self.rng.random())
        entry_pos = dest.length + target  # target is the negative overshoot
        dest_lane = self._choose_lane(dest, veh.pending_movement, dest.length)
        if dest_lane is None:
            return False  # spillback: downstream full
        delay_here = veh.total_delay - veh.delay_at_crossing
        self.crossing_records.append(CrossingRecord(
            intersection_id=inter.id, approach_id=approach.id,
            movement=veh.movement, delay=delay_here, tick=t,
        ))
        veh.delay_at_crossing = veh.total_delay
        veh.path.append((inter.id, t))
        veh.movement = veh.pending_movement
        veh.pending_movement = None
        if dest_lane.vehicles:
            entry_pos = max(entry_pos, dest_lane.vehicles[-1].pos + self.jam)
        veh.pos = min(max(entry_pos, 0.0), dest.length)
        veh.last_tick = t
        dest_lane.vehicles.append(veh)
        lane.next_allowed_tick = t + self.headway_ticks
        return True

    # -- observations, rewards, detectors ------------------------------------------

    def observation_range(self, inter: _Intersection, approach: _Approach) -> float:
        return min(inter.cv_range, approach.link.length)

    def vehicle_state_vector(self, intersection_id: str) -> np.ndarray:
        """Per approach and lane, vehicles within the observation range."""
        inter = self.intersections[intersection_id]
        counts: list[float] = []
        for approach in inter.approaches:
            limit = self.observation_range(inter, approach)
            for lane in approach.link.lanes:
                n = 0
                for veh in lane.vehicles:
                    if veh.pos <= limit:
                        n += 1
                    else:
                        break
                counts.append(float(n))
        return np.asarray(counts, dtype=np.float64)

    def observation_size(self, intersection_id: str) -> int:
        inter = self.intersections[intersection_id]
        return sum(len(a.link.lanes) for a in inter.approaches)

    def lane_capacities(self, intersection_id: str) -> np.ndarray:
        """Vehicles that fit in each observed lane segment (for scaling)."""
        inter = self.intersections[intersection_id]
        caps = []
        for approach in inter.approaches:
            limit = self.observation_range(inter, approach)
            caps.extend([max(limit / self.jam, 1.0)] * len(approach.link.lanes))
        return np.asarray(caps, dtype=np.float64)

    def reward(self, intersection_id: str, d_max: Optional[float] = None) -> float:
        """Negative normalized delay over approach vehicles in range.

        Only delay accrued since each vehicle's last stop-bar crossing counts,
        so queues inherited from upstream intersections contribute nothing.
        """
        inter = self.intersections[intersection_id]
        if d_max is None:
            d_max = inter.d_max
        total = 0.0
        for approach in inter.approaches:
            limit = self.observation_range(inter, approach)
            for lane in approach.link.lanes:
                for veh in lane.vehicles:
                    if veh.pos > limit:
                        break
                    total += veh.total_delay - veh.delay_at_crossing
        return -total / d_max

    def detector_readings(self, intersection_id: str) -> DetectorReadings:
        inter = self.intersections[intersection_id]
        presence = {}
        for phase, lanes in inter.phase_lanes.items():
            presence[phase] = any(lane.vehicles and lane.vehicles[0].pos <= self.zone
                                  for lane in lanes)
        return DetectorReadings(presence=presence, since_actuation=dict(inter.detector_since))

    # -- metrics ----------------------------------------------------------------------

    def metrics(self, warmup_s: float = 0.0) -> MetricsRecord:
        """Aggregate route travel times and movement delays after warm-up.

        A vehicle counts toward a route when its node trace contains the
        route's node sequence contiguously and it exited strictly after the
        warm-up boundary.  Routes with no completing vehicles are absent.
        """
        warmup_ticks = round(warmup_s / TICK)
        routes: dict[str, RouteStat] = {}
        for route in self.spec.routes:
            times = []
            want = route.nodes
            k = len(want)
            for rec in self.exit_records:
                if rec.exit_tick <= warmup_ticks:
                    continue
                nodes = rec.nodes
                for i in range(len(nodes) - k + 1):
                    if nodes[i:i + k] == want:
                        times.append((rec.node_ticks[i + k - 1] - rec.node_ticks[i]) / 10.0)
                        break
            if times:
                routes[route.name] = RouteStat(len(times), sum(times) / len(times))

        grouped: dict[tuple[str, str, str], list[float]] = {}
        all_delays: list[float] = []
        for rec in self.crossing_records:
            if rec.tick <= warmup_ticks:
                continue
            grouped.setdefault((rec.intersection_id, rec.approach_id, rec.movement),
                               []).append(rec.delay)
            all_delays.append(rec.delay)
        movements = {
            key: MovementStat(len(v), sum(v) / len(v)) for key, v in grouped.items()
        }
        mean_delay = sum(all_delays) / len(all_delays) if all_delays else None
        return MetricsRecord(
            routes=routes,
            movements=movements,
            mean_intersection_delay=mean_delay,
            spawned=self.spawned,
            exited=self.exited,
            in_network=self.in_network(),
        )


def load_network(spec, seed: int = 0) -> Simulator:
    """Build an empty, seeded simulator from a mapping or NetworkSpec."""
    if not isinstance(spec, NetworkSpec):
        spec = parse_network(spec)
    return Simulator(spec, seed=seed)
