"""Coordinated-actuated and fixed-time baseline controllers.

Both drive the same ring-barrier machine as the learning agents: at every
controller decision point they emit a phase pair that is valid under the
current action mask.  The actuated controller uses fixed force-offs laid
out on a cycle-relative clock (the coordinated phases' green onset is the
cycle zero point), presence-based calls, and gap-out on the passage time;
slack reverts to the coordinated phases.  The fixed-time controller reads
a cyclic pair schedule off a modular wall clock.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from . import signal_core as sc
from .errors import PlanMismatch, SpecError
from .microsim import DetectorReadings


@dataclass(frozen=True)
class CoordinationPlan:
    cycle_length: float
    offset: float
    splits: Mapping[int, float]
    coordinated: tuple[int, int]
    passage: Mapping[int, float]


def _clearance(plan: sc.RingBarrierPlan, phase: int) -> float:
    return (plan.yellow_ticks[phase] + plan.red_clear_ticks[phase]) / 10.0


def build_coordination(plan: sc.RingBarrierPlan, cfg: Mapping) -> CoordinationPlan:
    cycle = float(cfg["cycle_s"])
    offset = float(cfg.get("offset_s", 0.0))
    splits = {int(p): float(s) for p, s in cfg["splits"].items()}
    coordinated = tuple(int(p) for p in cfg["coordinated"])
    passage_cfg = cfg.get("passage_s", {})
    default_passage = float(cfg.get("default_passage_s", 3.0))
    passage = {p: float(passage_cfg.get(str(p), passage_cfg.get(p, default_passage)))
               for p in plan.enabled_phases}

    for p in list(splits) + list(coordinated):
        if p not in plan.enabled_phases:
            raise PlanMismatch(f"coordination references disabled phase {p}")
    if len(coordinated) != 2 or sc.ring_of(coordinated[0]) != 1 or sc.ring_of(coordinated[1]) != 2:
        raise PlanMismatch("coordinated phases must be one per ring")
    if sc.barrier_side(coordinated[0]) != sc.barrier_side(coordinated[1]):
        raise PlanMismatch("coordinated phases must share a barrier side")
    for ring in (1, 2):
        phases = plan.ring_phases(ring)
        missing = [p for p in phases if p not in splits]
        if missing:
            raise PlanMismatch(f"ring {ring} phases {missing} have no split")
        total = sum(splits[p] for p in phases)
        if abs(total - cycle) > 1e-6:
            raise SpecError(f"ring {ring} splits sum to {total}, not cycle {cycle}")
        for p in phases:
            floor = plan.min_green_ticks[p] / 10.0 + _clearance(plan, p)
            if splits[p] < floor - 1e-9:
                raise SpecError(f"split of phase {p} ({splits[p]}) below min green + clearance")
    return CoordinationPlan(cycle, offset, splits, coordinated, passage)


def _ring_geometry(plan: sc.RingBarrierPlan, coordination: CoordinationPlan, ring: int):
    """Rotated phase order with green windows [onset, force_off) per phase."""
    phases = list(plan.ring_phases(ring))
    coord = coordination.coordinated[ring - 1]
    k = phases.index(coord)
    order = phases[k:] + phases[:k]
    windows = {}
    at = 0.0
    for p in order:
        windows[p] = (at, at + coordination.splits[p] - _clearance(plan, p))
        at += coordination.splits[p]
    return order, windows


def _cyclic_in(pos: float, start: float, end: float, cycle: float) -> bool:
    start %= cycle
    end %= cycle
    if start <= end:
        return start <= pos < end
    return pos >= start or pos < end


def asc_tick(plan: sc.RingBarrierPlan, coordination: CoordinationPlan,
             state: sc.ControllerState, detectors: DetectorReadings,
             dt: float = 0.1) -> tuple[int, int]:
    """Phase pair a coordinated-actuated controller selects right now.

    Non-coordinated greens end at gap-out or at their fixed force-off;
    coordinated greens hold until their yield point and only leave when
    another phase has a call.  The returned pair is always unmasked.
    """
    mask = sc.compute_action_mask(plan, state)
    cycle = coordination.cycle_length
    pos = (state.clock - coordination.offset) % cycle

    def demand(phase: int) -> bool:
        return phase in coordination.coordinated or bool(detectors.presence.get(phase))

    actives = (state.ring1.target_phase, state.ring2.target_phase)
    any_other = any(demand(q) for q in plan.enabled_phases if q not in actives)

    releasable = {}
    rank = {}
    for ring_id, rs in ((1, state.ring1), (2, state.ring2)):
        order, windows = _ring_geometry(plan, coordination, ring_id)
        locked = (rs.interval in (sc.Interval.YELLOW, sc.Interval.RED_CLEAR)
                  or (rs.interval is sc.Interval.MIN_GREEN
                      and rs.green_ticks < plan.min_green_ticks[rs.active_phase]))
        if locked:
            releasable[ring_id] = False
            rank[ring_id] = {}
            continue
        p = rs.active_phase
        onset, force_off = windows[p]
        in_window = _cyclic_in(pos, onset, force_off, cycle)
        if p == coordination.coordinated[ring_id - 1]:
            may_leave = not in_window
        else:
            gap_out = detectors.since_actuation.get(p, float("inf")) >= coordination.passage[p]
            may_leave = (not in_window) or gap_out
        releasable[ring_id] = may_leave and any_other
        after = order[order.index(p) + 1:] + order[:order.index(p)]
        rank[ring_id] = {q: i + 1 for i, q in enumerate(after) if demand(q)}

    def pref(ring_id: int, rs: sc.RingState, q: int) -> float:
        if rs.interval in (sc.Interval.YELLOW, sc.Interval.RED_CLEAR):
            return 0.0
        p = rs.active_phase
        if q == p:
            return 1.0 if releasable[ring_id] else 5.0
        if not releasable[ring_id]:
            return 0.0
        r = rank[ring_id].get(q)
        if r is not None:
            return 30.0 - 2.0 * r
        return 0.5  # barrier partner without its own call

    best_index = None
    best_score = None
    for i, (q1, q2) in enumerate(plan.action_set):
        if not mask[i]:
            continue
        score = pref(1, state.ring1, q1) + pref(2, state.ring2, q2)
        if best_score is None or score > best_score:
            best_index, best_score = i, score
    return plan.action_set[best_index]


class AscController:
    """Stateless wrapper binding a plan and coordination parameters."""

    def __init__(self, plan: sc.RingBarrierPlan, coordination: CoordinationPlan):
        self.plan = plan
        self.coordination = coordination

    def decide(self, state: sc.ControllerState, detectors: DetectorReadings) -> tuple[int, int]:
        return asc_tick(self.plan, self.coordination, state, detectors)


# fixed time ------------------------------------------------------------------


@dataclass(frozen=True)
class FixedTimeSchedule:
    offset: float
    entries: tuple[tuple[tuple[int, int], float], ...]


def build_fixed_time(plan: sc.RingBarrierPlan, cfg: Mapping) -> FixedTimeSchedule:
    offset = float(cfg.get("offset_s", 0.0))
    entries = []
    for item in cfg["schedule"]:
        pair = (int(item["pair"][0]), int(item["pair"][1]))
        green = float(item["green_s"])
        if pair not in plan.action_set:
            raise PlanMismatch(f"scheduled pair {pair} is not in the plan's action set")
        floor = max(plan.min_green_ticks[pair[0]], plan.min_green_ticks[pair[1]]) / 10.0
        if green < floor:
            raise SpecError(f"scheduled green {green} below min green {floor} for {pair}")
        entries.append((pair, green))
    if len(entries) < 2:
        raise SpecError("fixed-time schedule needs at least two entries")
    return FixedTimeSchedule(offset=offset, entries=tuple(entries))


def _schedule_windows(plan: sc.RingBarrierPlan, schedule: FixedTimeSchedule):
    """(pair, green, clearance-to-next) windows; cycle = greens + clearances."""
    windows = []
    entries = schedule.entries
    for i, (pair, green) in enumerate(entries):
        nxt = entries[(i + 1) % len(entries)][0]
        clear = 0.0
        for component, next_component in zip(pair, nxt):
            if component != next_component:
                clear = max(clear, _clearance(plan, component))
        windows.append((pair, nxt, green, clear))
    cycle = sum(g + c for _, _, g, c in windows)
    return windows, cycle


def fixed_time_tick(plan: sc.RingBarrierPlan, schedule: FixedTimeSchedule,
                    state: sc.ControllerState) -> tuple[int, int]:
    """Pair demanded by the wall-clock schedule at this instant."""
    windows, cycle = _schedule_windows(plan, schedule)
    pos = (state.clock - schedule.offset) % cycle
    want = windows[0][0]
    at = 0.0
    for pair, nxt, green, clear in windows:
        if pos < at + green:
            want = pair
            break
        if pos < at + green + clear:
            want = nxt
            break
        at += green + clear
    mask = sc.compute_action_mask(plan, state)
    best_index = None
    best_score = -1
    for i, pair in enumerate(plan.action_set):
        if not mask[i]:
            continue
        score = (pair[0] == want[0]) + (pair[1] == want[1])
        if score > best_score:
            best_index, best_score = i, score
    return plan.action_set[best_index]


class FixedTimeController:
    def __init__(self, plan: sc.RingBarrierPlan, schedule: FixedTimeSchedule):
        self.plan = plan
        self.schedule = schedule
        self._windows, self._cycle = _schedule_windows(plan, schedule)

    def decide(self, state: sc.ControllerState,
               detectors: Optional[DetectorReadings] = None) -> tuple[int, int]:
        return fixed_time_tick(self.plan, self.schedule, state)
