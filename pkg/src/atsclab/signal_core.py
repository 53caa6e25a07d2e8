"""NEMA two-ring, dual-barrier signal controller state machine.

A plan enables a subset of the eight standard phases (ring 1 = 1..4,
ring 2 = 5..8, barrier sides {1,2,5,6} and {3,4,7,8}) and derives its
action set from the canonical list of same-side phase pairs.  Control
works on active/committed phases: an action either continues a ring's
green or commits the ring to a new phase, which is reached through the
full yellow + red-clearance sequence.  All timing arithmetic runs on a
0.1 s integer-tick grid so trajectories are exactly reproducible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import BadTiming, EmptyRing, InvalidAction, NoActions, OverAdvance, PlanError

TICK_SECONDS = 0.1
TICKS_PER_SECOND = 10

RING1_PHASES = (1, 2, 3, 4)
RING2_PHASES = (5, 6, 7, 8)
SIDE_A = frozenset({1, 2, 5, 6})
SIDE_B = frozenset({3, 4, 7, 8})

# Same-barrier-side pairs (ring-1 phase, ring-2 phase) in canonical order;
# pair 0 is (1, 5).
CANONICAL_PAIRS = ((1, 5), (1, 6), (2, 5), (2, 6), (3, 7), (3, 8), (4, 7), (4, 8))

GREEN = "green"
YELLOW = "yellow"
RED = "red"


class Interval(enum.Enum):
    MIN_GREEN = "min_green"
    EXTENSION_GREEN = "extension_green"
    YELLOW = "yellow"
    RED_CLEAR = "red_clear"


_GREEN_INTERVALS = (Interval.MIN_GREEN, Interval.EXTENSION_GREEN)
_CLEARANCE_INTERVALS = (Interval.YELLOW, Interval.RED_CLEAR)


def ring_of(phase: int) -> int:
    return 1 if phase <= 4 else 2


def barrier_side(phase: int) -> str:
    return "A" if phase in SIDE_A else "B"


def seconds_to_ticks(value: float, name: str, minimum: int = 0) -> int:
    """Convert a duration to integer ticks, rejecting off-grid values."""
    ticks = round(value * TICKS_PER_SECOND)
    if abs(value * TICKS_PER_SECOND - ticks) > 1e-6:
        raise BadTiming(f"{name}={value!r} is not a multiple of {TICK_SECONDS} s")
    if ticks < minimum:
        raise BadTiming(f"{name}={value!r} must be >= {minimum / TICKS_PER_SECOND} s")
    return int(ticks)


def ticks_to_seconds(ticks: int) -> float:
    return ticks / TICKS_PER_SECOND


@dataclass(frozen=True)
class PhaseTiming:
    """Per-phase interval durations in seconds (0.1 s multiples)."""

    min_green: float
    yellow: float
    red_clear: float
    max_green: Optional[float] = None

    def __post_init__(self) -> None:
        seconds_to_ticks(self.min_green, "min_green", minimum=1)
        seconds_to_ticks(self.yellow, "yellow", minimum=1)
        seconds_to_ticks(self.red_clear, "red_clear", minimum=0)
        if self.max_green is not None:
            mg = seconds_to_ticks(self.max_green, "max_green", minimum=1)
            if mg < seconds_to_ticks(self.min_green, "min_green"):
                raise BadTiming("max_green must be >= min_green")


@dataclass(frozen=True)
class RingBarrierPlan:
    """Validated plan: enabled phases, timings, and the derived action set."""

    intersection_id: str
    enabled_phases: tuple[int, ...]
    timings: Mapping[int, PhaseTiming]
    action_set: tuple[tuple[int, int], ...]
    min_green_ticks: Mapping[int, int]
    yellow_ticks: Mapping[int, int]
    red_clear_ticks: Mapping[int, int]
    max_green_ticks: Mapping[int, Optional[int]]

    @property
    def n_p(self) -> int:
        return len(self.enabled_phases)

    @property
    def n_actions(self) -> int:
        return len(self.action_set)

    def phase_index(self, phase: int) -> int:
        return self.enabled_phases.index(phase)

    def ring_phases(self, ring: int) -> tuple[int, ...]:
        source = RING1_PHASES if ring == 1 else RING2_PHASES
        return tuple(p for p in source if p in self.enabled_phases)


def build_plan(config: Mapping) -> RingBarrierPlan:
    """Build and validate a plan from a description.

    ``config`` carries ``intersection_id`` (optional) and ``phases``: a
    mapping of phase id -> timing mapping with keys ``min_green``,
    ``yellow``, ``red_clear`` and optional ``max_green``.
    """
    phases_cfg = config["phases"]
    intersection_id = str(config.get("intersection_id", ""))

    timings: dict[int, PhaseTiming] = {}
    for raw_phase, timing_cfg in phases_cfg.items():
        phase = int(raw_phase)
        if phase not in RING1_PHASES and phase not in RING2_PHASES:
            raise PlanError(f"phase {phase} is not one of 1..8")
        if isinstance(timing_cfg, PhaseTiming):
            timings[phase] = timing_cfg
        else:
            timings[phase] = PhaseTiming(
                min_green=float(timing_cfg["min_green"]),
                yellow=float(timing_cfg["yellow"]),
                red_clear=float(timing_cfg["red_clear"]),
                max_green=(
                    float(timing_cfg["max_green"])
                    if timing_cfg.get("max_green") is not None
                    else None
                ),
            )

    enabled = tuple(sorted(timings))
    if not enabled:
        raise PlanError("plan enables no phases")

    for side, side_set in (("A", SIDE_A), ("B", SIDE_B)):
        ring1_side = [p for p in enabled if p in side_set and ring_of(p) == 1]
        ring2_side = [p for p in enabled if p in side_set and ring_of(p) == 2]
        if bool(ring1_side) != bool(ring2_side):
            raise EmptyRing(
                f"barrier side {side} is occupied by only one ring "
                f"(ring1={ring1_side}, ring2={ring2_side})"
            )

    action_set = tuple(
        pair for pair in CANONICAL_PAIRS if pair[0] in enabled and pair[1] in enabled
    )
    if len(action_set) < 2:
        raise NoActions(f"plan admits {len(action_set)} phase pair(s); need >= 2")

    return RingBarrierPlan(
        intersection_id=intersection_id,
        enabled_phases=enabled,
        timings=timings,
        action_set=action_set,
        min_green_ticks={p: seconds_to_ticks(t.min_green, "min_green") for p, t in timings.items()},
        yellow_ticks={p: seconds_to_ticks(t.yellow, "yellow") for p, t in timings.items()},
        red_clear_ticks={p: seconds_to_ticks(t.red_clear, "red_clear") for p, t in timings.items()},
        max_green_ticks={
            p: (seconds_to_ticks(t.max_green, "max_green") if t.max_green is not None else None)
            for p, t in timings.items()
        },
    )


@dataclass(frozen=True)
class RingState:
    """One ring's live interval state.

    ``committed_phase`` is present exactly while the ring serves yellow or
    red clearance; it names the phase that turns green when clearance ends.
    """

    active_phase: int
    interval: Interval
    elapsed_ticks: int
    green_ticks: int
    committed_phase: Optional[int] = None

    @property
    def elapsed_in_interval(self) -> float:
        return ticks_to_seconds(self.elapsed_ticks)

    @property
    def elapsed_green(self) -> float:
        return ticks_to_seconds(self.green_ticks)

    @property
    def is_green(self) -> bool:
        return self.interval in _GREEN_INTERVALS

    @property
    def target_phase(self) -> int:
        """The phase this ring is serving or committed to serve next."""
        return self.committed_phase if self.committed_phase is not None else self.active_phase


@dataclass(frozen=True)
class ControllerState:
    ring1: RingState
    ring2: RingState
    clock_ticks: int = 0

    @property
    def clock(self) -> float:
        return ticks_to_seconds(self.clock_ticks)

    @property
    def active_pair(self) -> tuple[int, int]:
        return (self.ring1.active_phase, self.ring2.active_phase)

    @property
    def target_pair(self) -> tuple[int, int]:
        return (self.ring1.target_phase, self.ring2.target_phase)


@dataclass(frozen=True)
class ActionMask:
    valid: tuple[bool, ...]

    def __iter__(self):
        return iter(self.valid)

    def __getitem__(self, index: int) -> bool:
        return self.valid[index]

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, ok in enumerate(self.valid) if ok)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.valid, dtype=bool)


@dataclass(frozen=True)
class DisplayVector:
    """Signal indication per enabled phase, in enabled-phase order."""

    phases: tuple[int, ...]
    colors: tuple[str, ...]

    def color(self, phase: int) -> str:
        return self.colors[self.phases.index(phase)]

    def as_dict(self) -> dict[int, str]:
        return dict(zip(self.phases, self.colors))

    def green_phases(self) -> tuple[int, ...]:
        return tuple(p for p, c in zip(self.phases, self.colors) if c == GREEN)


def initial_state(plan: RingBarrierPlan, pair: Optional[tuple[int, int]] = None) -> ControllerState:
    """Fresh controller resting in MinGreen on ``pair`` (default: pair 0)."""
    if pair is None:
        pair = plan.action_set[0]
    if pair not in plan.action_set:
        raise InvalidAction(f"{pair} is not in the plan's action set")
    return ControllerState(
        ring1=RingState(pair[0], Interval.MIN_GREEN, 0, 0),
        ring2=RingState(pair[1], Interval.MIN_GREEN, 0, 0),
        clock_ticks=0,
    )


def _component_allowed(plan: RingBarrierPlan, ring: RingState, component: int,
                       enforce_max_green: bool = True) -> bool:
    if ring.interval in _CLEARANCE_INTERVALS:
        return component == ring.committed_phase
    if ring.interval is Interval.MIN_GREEN and ring.green_ticks < plan.min_green_ticks[ring.active_phase]:
        return component == ring.active_phase
    if enforce_max_green:
        limit = plan.max_green_ticks.get(ring.active_phase)
        if limit is not None and ring.green_ticks >= limit:
            return component != ring.active_phase
    return True


def compute_action_mask(plan: RingBarrierPlan, state: ControllerState) -> ActionMask:
    """Validity of every pair in the plan's action set.

    Clearance and unserved min green lock a ring to its committed/active
    phase; an expired max green forces the ring off its active phase.  If
    the max-green force conflicts with the other ring's lock (possible on
    small plans), the lock wins and the force is relaxed so the mask never
    goes all-false on a reachable state.
    """
    valid = tuple(
        _component_allowed(plan, state.ring1, a) and _component_allowed(plan, state.ring2, b)
        for a, b in plan.action_set
    )
    if not any(valid):
        valid = tuple(
            _component_allowed(plan, state.ring1, a, enforce_max_green=False)
            and _component_allowed(plan, state.ring2, b, enforce_max_green=False)
            for a, b in plan.action_set
        )
    return ActionMask(valid)


def _ring_timestep_ticks(plan: RingBarrierPlan, ring: RingState, base_dt_ticks: int) -> int:
    if ring.interval is Interval.YELLOW:
        remaining = (
            plan.yellow_ticks[ring.active_phase]
            - ring.elapsed_ticks
            + plan.red_clear_ticks[ring.active_phase]
            + plan.min_green_ticks[ring.committed_phase]
        )
    elif ring.interval is Interval.RED_CLEAR:
        remaining = (
            plan.red_clear_ticks[ring.active_phase]
            - ring.elapsed_ticks
            + plan.min_green_ticks[ring.committed_phase]
        )
    elif ring.interval is Interval.MIN_GREEN:
        remaining = plan.min_green_ticks[ring.active_phase] - ring.elapsed_ticks
    else:
        remaining = base_dt_ticks
    return max(remaining, 1)


def ring_timestep(plan: RingBarrierPlan, ring: RingState, base_dt: float = 1.0) -> float:
    """Decision time step for one ring.

    Clearance: remaining yellow + red clearance plus the committed phase's
    min green.  Min green: the remainder.  Extension green: the base step.
    """
    base_ticks = seconds_to_ticks(base_dt, "base_dt", minimum=1)
    return ticks_to_seconds(_ring_timestep_ticks(plan, ring, base_ticks))


def controller_timestep(plan: RingBarrierPlan, state: ControllerState, base_dt: float = 1.0) -> float:
    """Minimum of the two ring time steps, floored at one tick."""
    base_ticks = seconds_to_ticks(base_dt, "base_dt", minimum=1)
    ticks = min(
        _ring_timestep_ticks(plan, state.ring1, base_ticks),
        _ring_timestep_ticks(plan, state.ring2, base_ticks),
    )
    return ticks_to_seconds(ticks)


def apply_action(plan: RingBarrierPlan, state: ControllerState, pair: tuple[int, int]) -> ControllerState:
    """Apply a valid phase pair: continue greens or commit terminations."""
    try:
        index = plan.action_set.index(tuple(pair))
    except ValueError:
        raise InvalidAction(f"{pair} is not in the plan's action set") from None
    mask = compute_action_mask(plan, state)
    if not mask[index]:
        raise InvalidAction(f"action {pair} is masked out in the current state")

    def transition(ring: RingState, component: int) -> RingState:
        if ring.interval in _CLEARANCE_INTERVALS:
            return ring  # locked; mask guarantees component == committed
        if component == ring.active_phase:
            return ring  # continue green
        return RingState(
            active_phase=ring.active_phase,
            interval=Interval.YELLOW,
            elapsed_ticks=0,
            green_ticks=0,
            committed_phase=component,
        )

    return ControllerState(
        ring1=transition(state.ring1, pair[0]),
        ring2=transition(state.ring2, pair[1]),
        clock_ticks=state.clock_ticks,
    )


def _advance_ring_one_tick(plan: RingBarrierPlan, ring: RingState) -> tuple[RingState, int, str]:
    """Serve one 0.1 s tick; returns (state, phase served, color shown).

    The color reflects the interval served during the tick; interval
    transitions land at the tick boundary, so a completed clearance hands
    the committed phase its green starting with the next tick.
    """
    interval = ring.interval
    elapsed = ring.elapsed_ticks + 1
    green = ring.green_ticks
    active = ring.active_phase
    committed = ring.committed_phase

    if interval in _GREEN_INTERVALS:
        green += 1
        if interval is Interval.MIN_GREEN and elapsed >= plan.min_green_ticks[active]:
            interval = Interval.EXTENSION_GREEN
            elapsed = 0
        return RingState(active, interval, elapsed, green, committed), active, GREEN

    if interval is Interval.YELLOW:
        if elapsed >= plan.yellow_ticks[active]:
            if plan.red_clear_ticks[active] == 0:
                return RingState(committed, Interval.MIN_GREEN, 0, 0, None), active, YELLOW
            return RingState(active, Interval.RED_CLEAR, 0, green, committed), active, YELLOW
        return RingState(active, interval, elapsed, green, committed), active, YELLOW

    # red clearance
    if elapsed >= plan.red_clear_ticks[active]:
        return RingState(committed, Interval.MIN_GREEN, 0, 0, None), active, RED
    return RingState(active, interval, elapsed, green, committed), active, RED


def display_vector(plan: RingBarrierPlan, state: ControllerState) -> DisplayVector:
    colors = []
    for phase in plan.enabled_phases:
        ring = state.ring1 if ring_of(phase) == 1 else state.ring2
        if ring.active_phase == phase:
            if ring.interval in _GREEN_INTERVALS:
                colors.append(GREEN)
            elif ring.interval is Interval.YELLOW:
                colors.append(YELLOW)
            else:
                colors.append(RED)
        else:
            colors.append(RED)
    return DisplayVector(plan.enabled_phases, tuple(colors))


def advance(plan: RingBarrierPlan, state: ControllerState, dt: float) -> tuple[ControllerState, DisplayVector]:
    """Advance both rings ``dt`` seconds (0.1 s ticks).

    Returns the new state and the display shown during the final tick.
    ``dt`` must not step past a clearance or min-green boundary; decision
    points are re-evaluated by the caller at every boundary.
    """
    dt_ticks = seconds_to_ticks(dt, "dt", minimum=1)
    base_ticks = max(dt_ticks, TICKS_PER_SECOND)
    limit = min(
        _ring_timestep_ticks(plan, state.ring1, base_ticks),
        _ring_timestep_ticks(plan, state.ring2, base_ticks),
    )
    if dt_ticks > limit:
        raise OverAdvance(
            f"dt={dt} exceeds the controller time step {ticks_to_seconds(limit)}"
        )
    ring1, ring2 = state.ring1, state.ring2
    for _ in range(dt_ticks):
        ring1, served1, color1 = _advance_ring_one_tick(plan, ring1)
        ring2, served2, color2 = _advance_ring_one_tick(plan, ring2)
    new_state = ControllerState(ring1, ring2, state.clock_ticks + dt_ticks)
    colors = []
    for phase in plan.enabled_phases:
        if phase == served1:
            colors.append(color1)
        elif phase == served2:
            colors.append(color2)
        else:
            colors.append(RED)
    return new_state, DisplayVector(plan.enabled_phases, tuple(colors))


def signal_state_vector(plan: RingBarrierPlan, state: ControllerState) -> np.ndarray:
    """Elapsed green per enabled phase; zero for phases not displaying green."""
    out = np.zeros(plan.n_p, dtype=np.float64)
    for ring in (state.ring1, state.ring2):
        if ring.interval in _GREEN_INTERVALS:
            out[plan.phase_index(ring.active_phase)] = ticks_to_seconds(ring.green_ticks)
    return out


_INTERVAL_CODES = {
    Interval.MIN_GREEN: "MG",
    Interval.EXTENSION_GREEN: "EG",
    Interval.YELLOW: "Y",
    Interval.RED_CLEAR: "RC",
}


def _format_ring(ring: RingState) -> str:
    committed = ring.committed_phase if ring.committed_phase is not None else "-"
    return (
        f"{ring.active_phase}:{_INTERVAL_CODES[ring.interval]}"
        f":{ring.elapsed_in_interval:.1f}:{ring.elapsed_green:.1f}:{committed}"
    )


def format_decision(state: ControllerState, mask: ActionMask, pair: tuple[int, int]) -> str:
    """One decision-trace line: clock, ring states, mask bits, chosen pair."""
    bits = "".join("1" if ok else "0" for ok in mask.valid)
    return (
        f"t={state.clock:.1f} r1={_format_ring(state.ring1)} "
        f"r2={_format_ring(state.ring2)} mask={bits} a={pair[0]},{pair[1]}"
    )
