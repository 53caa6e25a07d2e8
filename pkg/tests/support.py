"""Shared helpers for the test suite: factories, injection, a safety auditor."""

from __future__ import annotations

import numpy as np

from atsclab import signal_core as sc
from atsclab.microsim import Simulator, Vehicle


def make_plan(phases, min_green=5.0, yellow=3.5, red_clear=1.5, max_green=None,
              intersection_id="X"):
    timing = {"min_green": min_green, "yellow": yellow, "red_clear": red_clear,
              "max_green": max_green}
    return sc.build_plan({
        "intersection_id": intersection_id,
        "phases": {p: dict(timing) for p in phases},
    })


PHASE_SETS = (
    (1, 2, 3, 4, 5, 6, 7, 8),
    (1, 2, 4, 5, 6, 8),
    (2, 3, 4, 6, 7, 8),
    (2, 4, 6, 8),
    (1, 2, 5, 6),
)


def random_plan_config(pyrandom, allow_max_green=True):
    """A randomized valid plan description on the 0.1 s grid."""
    phases = pyrandom.choice(PHASE_SETS)
    cfg = {}
    for p in phases:
        timing = {
            "min_green": pyrandom.randrange(20, 81) / 10.0,
            "yellow": pyrandom.randrange(30, 51) / 10.0,
            "red_clear": pyrandom.randrange(0, 26) / 10.0,
            "max_green": None,
        }
        if allow_max_green and pyrandom.random() < 0.2:
            timing["max_green"] = timing["min_green"] + pyrandom.randrange(0, 300) / 10.0
        cfg[p] = timing
    return {"intersection_id": "rand", "phases": cfg}


class RingAudit:
    """Black-box safety monitor over per-tick displays and controller state.

    Checks, per ring: every green run lasts at least min green before
    yellow, yellow runs exactly its configured length, and at least the
    red-clearance time of red separates a phase's green end from the next
    green.  Across rings it checks barrier side consistency, and at every
    decision that the mask is non-empty.
    """

    def __init__(self, plan: sc.RingBarrierPlan):
        self.plan = plan
        self.violations: list[str] = []
        self._ring = {1: self._fresh(), 2: self._fresh()}
        self.decisions = 0
        self.ticks = 0

    @staticmethod
    def _fresh():
        return {"status": None, "phase": None, "run": 0, "pending_red": 0, "red_run": 0}

    def observe_decision(self, state: sc.ControllerState, mask: sc.ActionMask) -> None:
        self.decisions += 1
        if not any(mask.valid):
            self.violations.append(f"all-false mask at t={state.clock}")

    def observe_tick(self, state: sc.ControllerState, display: sc.DisplayVector) -> None:
        self.ticks += 1
        side1 = sc.barrier_side(state.ring1.target_phase)
        side2 = sc.barrier_side(state.ring2.target_phase)
        if side1 != side2:
            self.violations.append(f"barrier split at t={state.clock}: {side1} vs {side2}")
        for ring_id in (1, 2):
            self._observe_ring(ring_id, display)

    def _ring_display(self, ring_id: int, display: sc.DisplayVector):
        for phase in self.plan.ring_phases(ring_id):
            color = display.color(phase)
            if color != sc.RED:
                return color, phase
        return sc.RED, None

    def _observe_ring(self, ring_id: int, display: sc.DisplayVector) -> None:
        track = self._ring[ring_id]
        color, phase = self._ring_display(ring_id, display)
        prev_status, prev_phase = track["status"], track["phase"]
        same = (color, phase) == (prev_status, prev_phase)
        if same:
            track["run"] += 1
            if color == sc.RED:
                track["red_run"] += 1
            return

        # transition: close out the previous display state
        if prev_status == sc.GREEN:
            if track["run"] < self.plan.min_green_ticks[prev_phase]:
                self.violations.append(
                    f"ring {ring_id} phase {prev_phase} green ran "
                    f"{track['run']} ticks < min green")
            if not (color == sc.YELLOW and phase == prev_phase):
                self.violations.append(
                    f"ring {ring_id} green of {prev_phase} ended in {color}/{phase}")
        elif prev_status == sc.YELLOW:
            if track["run"] != self.plan.yellow_ticks[prev_phase]:
                self.violations.append(
                    f"ring {ring_id} phase {prev_phase} yellow ran {track['run']} ticks")
            rc = self.plan.red_clear_ticks[prev_phase]
            if color != sc.RED and not (rc == 0 and color == sc.GREEN):
                self.violations.append(
                    f"ring {ring_id} yellow of {prev_phase} ended in {color}/{phase}")
            track["pending_red"] = rc
            track["red_run"] = 0
        elif prev_status == sc.RED:
            if color != sc.GREEN:
                self.violations.append(f"ring {ring_id} red ended in {color}")
            if track["red_run"] < track["pending_red"]:
                self.violations.append(
                    f"ring {ring_id} served {track['red_run']} red ticks "
                    f"< clearance {track['pending_red']}")
            track["pending_red"] = 0

        track["status"], track["phase"] = color, phase
        track["run"] = 1
        track["red_run"] = 1 if color == sc.RED else 0


def step_randomly(plan: sc.RingBarrierPlan, rng: np.random.Generator,
                  n_decisions: int, audit: RingAudit | None = None) -> RingAudit:
    """Drive a controller with uniformly random valid actions under audit."""
    if audit is None:
        audit = RingAudit(plan)
    state = sc.initial_state(plan)
    for _ in range(n_decisions):
        mask = sc.compute_action_mask(plan, state)
        audit.observe_decision(state, mask)
        choices = mask.indices()
        pair = plan.action_set[choices[rng.integers(len(choices))]]
        state = sc.apply_action(plan, state, pair)
        dt_ticks = round(sc.controller_timestep(plan, state) * 10)
        for _ in range(dt_ticks):
            state, display = sc.advance(plan, state, 0.1)
            audit.observe_tick(state, display)
    return audit


# ---------------------------------------------------------------------------
# microsim scenario factories


def cross_network(entry_rates=None, length=500.0, speed=50.0, cv_range=1000.0,
                  lanes=1, min_green=5.0, yellow=3.5, red_clear=1.5):
    """Single four-way intersection X with boundary nodes W/E/N/S."""
    rates = {"W": 200.0, "E": 200.0, "N": 100.0, "S": 100.0}
    if entry_rates:
        rates.update(entry_rates)
    timing = {"min_green": min_green, "yellow": yellow, "red_clear": red_clear}
    links = []
    for node in ("W", "E", "N", "S"):
        links.append({"from": node, "to": "X", "length_ft": length, "lanes": lanes,
                      "speed_ftps": speed})
        links.append({"from": "X", "to": node, "length_ft": length, "lanes": lanes,
                      "speed_ftps": speed})
    approaches = [
        {"id": "EB", "from": "W", "lanes": [["through"]] * lanes,
         "turns": {"through": 1.0}, "phases": {"through": 2}, "to": {"through": "E"}},
        {"id": "WB", "from": "E", "lanes": [["through"]] * lanes,
         "turns": {"through": 1.0}, "phases": {"through": 6}, "to": {"through": "W"}},
        {"id": "SB", "from": "N", "lanes": [["through"]] * lanes,
         "turns": {"through": 1.0}, "phases": {"through": 4}, "to": {"through": "S"}},
        {"id": "NB", "from": "S", "lanes": [["through"]] * lanes,
         "turns": {"through": 1.0}, "phases": {"through": 8}, "to": {"through": "N"}},
    ]
    return {
        "name": "cross",
        "defaults": {"free_flow_speed_ftps": speed},
        "links": links,
        "intersections": [{
            "id": "X",
            "plan": {"phases": {p: dict(timing) for p in (2, 4, 6, 8)}},
            "cv_range_ft": cv_range,
            "approaches": approaches,
        }],
        "entries": [{"node": n, "rate_vph": r} for n, r in rates.items()],
        "routes": [
            {"name": "EB", "nodes": ["W", "X", "E"]},
            {"name": "WB", "nodes": ["E", "X", "W"]},
        ],
    }


def pipeline_network(mid_length=50.0, speed=50.0):
    """Two signals A -> B joined by a short link, for spillback tests."""
    timing = {"min_green": 5.0, "yellow": 3.5, "red_clear": 1.5}
    plan = {"phases": {p: dict(timing) for p in (2, 4, 6, 8)}}
    return {
        "name": "pipeline",
        "defaults": {"free_flow_speed_ftps": speed},
        "links": [
            {"from": "W", "to": "A", "length_ft": 500.0, "lanes": 1, "speed_ftps": speed},
            {"from": "A", "to": "B", "length_ft": mid_length, "lanes": 1, "speed_ftps": speed},
            {"from": "B", "to": "E", "length_ft": 500.0, "lanes": 1, "speed_ftps": speed},
        ],
        "intersections": [
            {"id": "A", "plan": plan, "approaches": [
                {"id": "EB", "from": "W", "lanes": [["through"]],
                 "turns": {"through": 1.0}, "phases": {"through": 2},
                 "to": {"through": "B"}}]},
            {"id": "B", "plan": plan, "approaches": [
                {"id": "EB", "from": "A", "lanes": [["through"]],
                 "turns": {"through": 1.0}, "phases": {"through": 2},
                 "to": {"through": "E"}}]},
        ],
        "entries": [{"node": "W", "rate_vph": 0.0}],
        "routes": [{"name": "EB", "nodes": ["W", "A", "B", "E"]}],
    }


def inject_vehicle(sim: Simulator, link_key, pos, movement, lane_idx=0,
                   total_delay=0.0, delay_at_crossing=0.0):
    """Place a vehicle directly on a lane (white-box test setup)."""
    link = sim.links[tuple(link_key)]
    veh = Vehicle(sim._next_vid, pos, movement, sim.clock_ticks, link.spec.from_node)
    veh.total_delay = total_delay
    veh.delay_at_crossing = delay_at_crossing
    sim._next_vid += 1
    sim.spawned += 1
    lane = link.lanes[lane_idx]
    lane.vehicles.append(veh)
    lane.vehicles.sort(key=lambda v: v.pos)
    return veh


def uniform_displays(sim: Simulator, green_phases) -> dict:
    """Manual displays: the given phases green, everything else red."""
    greens = set(green_phases)
    out = {}
    for iid, plan in sim.plans.items():
        out[iid] = {p: (sc.GREEN if p in greens else sc.RED) for p in plan.enabled_phases}
    return out


def run_signals(sim: Simulator, controllers, seconds: float):
    """Drive sim + rule controllers, returning the per-tick display timeline.

    Also asserts that every controller decision is valid under the mask.
    """
    plans = sim.plans
    states = {iid: sc.initial_state(plan) for iid, plan in plans.items()}
    timeline = []
    end = round(seconds * 10)
    while sim.clock_ticks < end:
        for iid, plan in plans.items():
            state = states[iid]
            mask = sc.compute_action_mask(plan, state)
            pair = controllers[iid].decide(state, sim.detector_readings(iid))
            assert pair in plan.action_set, f"{iid}: {pair} not in action set"
            assert mask[plan.action_set.index(pair)], f"{iid}: {pair} masked at t={state.clock}"
            states[iid] = sc.apply_action(plan, state, pair)
        dt_ticks = min(round(sc.controller_timestep(plans[iid], states[iid]) * 10)
                       for iid in plans)
        dt_ticks = min(dt_ticks, end - sim.clock_ticks)
        for _ in range(dt_ticks):
            displays = {}
            for iid, plan in plans.items():
                states[iid], disp = sc.advance(plan, states[iid], 0.1)
                displays[iid] = disp.as_dict()
            timeline.append((sim.clock_ticks, {i: dict(d) for i, d in displays.items()}))
            sim.tick(displays)
    return timeline


def green_intervals(timeline, intersection_id: str, phase: int):
    """(onset_tick, end_tick) pairs of continuous green for one phase."""
    intervals = []
    start = None
    for tick, displays in timeline:
        green = displays[intersection_id].get(phase) == sc.GREEN
        if green and start is None:
            start = tick
        elif not green and start is not None:
            intervals.append((start, tick))
            start = None
    if start is not None:
        intervals.append((start, timeline[-1][0] + 1))
    return intervals
