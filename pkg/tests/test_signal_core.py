"""Unit and property tests for the ring-barrier controller."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atsclab import signal_core as sc
from atsclab.errors import BadTiming, EmptyRing, InvalidAction, NoActions, OverAdvance

from support import make_plan, random_plan_config, step_randomly


def timing(min_green=5.0, yellow=3.5, red_clear=1.5, max_green=None):
    return {"min_green": min_green, "yellow": yellow, "red_clear": red_clear,
            "max_green": max_green}


# build_plan -----------------------------------------------------------------

def test_full_plan_action_set_is_canonical():
    plan = make_plan(range(1, 9))
    assert plan.action_set == sc.CANONICAL_PAIRS
    assert plan.action_set[0] == (1, 5)
    assert plan.n_p == 8


def test_filtered_action_set_for_through_only_plan():
    plan = make_plan([2, 4, 6, 8])
    assert plan.action_set == ((2, 6), (4, 8))
    assert plan.n_p == 4


def test_single_pair_plan_rejected():
    with pytest.raises(NoActions):
        make_plan([2, 6])


def test_one_sided_barrier_occupancy_rejected():
    # ring 1 occupies side B with phases 3,4 but ring 2 has nothing there
    with pytest.raises(EmptyRing):
        make_plan([1, 2, 3, 4, 5, 6])


@pytest.mark.parametrize("bad", [
    {"min_green": 0.0, "yellow": 3.5, "red_clear": 1.5},
    {"min_green": 5.0, "yellow": 0.0, "red_clear": 1.5},
    {"min_green": 5.0, "yellow": 3.52, "red_clear": 1.5},
    {"min_green": 5.0, "yellow": 3.5, "red_clear": -0.1},
    {"min_green": 5.0, "yellow": 3.5, "red_clear": 1.5, "max_green": 4.9},
])
def test_bad_timings_rejected(bad):
    with pytest.raises(BadTiming):
        sc.build_plan({"phases": {2: bad, 6: timing(), 4: timing(), 8: timing()}})


# compute_action_mask --------------------------------------------------------

def test_mask_min_green_locks_ring_one():
    plan = make_plan(range(1, 9))
    state = sc.ControllerState(
        ring1=sc.RingState(2, sc.Interval.MIN_GREEN, 30, 30),
        ring2=sc.RingState(6, sc.Interval.EXTENSION_GREEN, 40, 90),
    )
    mask = sc.compute_action_mask(plan, state)
    assert mask.valid == (False, False, True, True, False, False, False, False)


def test_mask_all_valid_when_unlocked():
    plan = make_plan(range(1, 9))
    state = sc.ControllerState(
        ring1=sc.RingState(1, sc.Interval.EXTENSION_GREEN, 20, 80),
        ring2=sc.RingState(5, sc.Interval.EXTENSION_GREEN, 20, 80),
    )
    assert all(sc.compute_action_mask(plan, state).valid)


def test_mask_clearance_locks_both_rings():
    plan = make_plan(range(1, 9))
    state = sc.ControllerState(
        ring1=sc.RingState(2, sc.Interval.YELLOW, 10, 0, committed_phase=3),
        ring2=sc.RingState(6, sc.Interval.RED_CLEAR, 5, 0, committed_phase=7),
    )
    mask = sc.compute_action_mask(plan, state)
    assert mask.indices() == (plan.action_set.index((3, 7)),)


def test_mask_max_green_forces_active_out():
    plan = sc.build_plan({"phases": {
        1: timing(), 2: timing(max_green=30.0), 5: timing(), 6: timing(),
        3: timing(), 4: timing(), 7: timing(), 8: timing(),
    }})
    state = sc.ControllerState(
        ring1=sc.RingState(2, sc.Interval.EXTENSION_GREEN, 100, 300),
        ring2=sc.RingState(6, sc.Interval.EXTENSION_GREEN, 100, 300),
    )
    mask = sc.compute_action_mask(plan, state)
    for i, (a, _) in enumerate(plan.action_set):
        assert mask[i] == (a != 2)


def test_mask_max_green_yields_to_clearance_lock():
    # {2,4,6,8} plan: ring1 locked to committed 2 while ring2 has expired
    # max green on 6; the only lock-compatible pair keeps phase 6.
    plan = sc.build_plan({"phases": {
        2: timing(), 4: timing(), 6: timing(max_green=30.0), 8: timing(),
    }})
    state = sc.ControllerState(
        ring1=sc.RingState(4, sc.Interval.YELLOW, 10, 0, committed_phase=2),
        ring2=sc.RingState(6, sc.Interval.EXTENSION_GREEN, 100, 320),
    )
    mask = sc.compute_action_mask(plan, state)
    assert mask.indices() == (plan.action_set.index((2, 6)),)


# ring_timestep / controller_timestep ----------------------------------------

def test_ring_timestep_clearance_example():
    plan = sc.build_plan({"phases": {
        2: timing(min_green=5.0, yellow=4.0, red_clear=2.5),
        4: timing(min_green=5.0), 6: timing(), 8: timing(),
    }})
    # 1.5 s of yellow left (elapsed 2.5 of 4.0), red_clear 2.5, committed min 5.0
    ring = sc.RingState(2, sc.Interval.YELLOW, 25, 0, committed_phase=4)
    assert sc.ring_timestep(plan, ring) == 9.0


def test_ring_timestep_min_green_remainder():
    plan = make_plan([2, 4, 6, 8])
    ring = sc.RingState(2, sc.Interval.MIN_GREEN, 30, 30)
    assert sc.ring_timestep(plan, ring) == 2.0


def test_ring_timestep_extension_green_is_base_dt():
    plan = make_plan([2, 4, 6, 8])
    ring = sc.RingState(2, sc.Interval.EXTENSION_GREEN, 30, 80)
    assert sc.ring_timestep(plan, ring) == 1.0


def ctrl(plan, r1, r2):
    return sc.ControllerState(ring1=r1, ring2=r2)


def test_controller_timestep_is_minimum():
    plan = make_plan([2, 4, 6, 8])
    locked = sc.RingState(2, sc.Interval.YELLOW, 0, 0, committed_phase=4)  # 3.5+1.5+5.0
    ext = sc.RingState(6, sc.Interval.EXTENSION_GREEN, 0, 80)
    assert sc.ring_timestep(plan, locked) == 10.0
    assert sc.controller_timestep(plan, ctrl(plan, locked, ext)) == 1.0

    both = ctrl(plan, sc.RingState(2, sc.Interval.MIN_GREEN, 30, 30),
                sc.RingState(6, sc.Interval.MIN_GREEN, 30, 30))
    assert sc.controller_timestep(plan, both) == 2.0

    nearly = ctrl(plan, sc.RingState(2, sc.Interval.MIN_GREEN, 49, 49),
                  sc.RingState(6, sc.Interval.RED_CLEAR, 0, 0, committed_phase=5))
    # ring1 has 0.1 s of min green left, ring2 7.0 s: minimum allowable wins
    plan8 = make_plan(range(1, 9))
    nearly = ctrl(plan8, sc.RingState(2, sc.Interval.MIN_GREEN, 49, 49),
                  sc.RingState(6, sc.Interval.RED_CLEAR, 0, 0, committed_phase=5))
    assert sc.controller_timestep(plan8, nearly) == 0.1


# apply_action ----------------------------------------------------------------

def test_apply_action_terminates_both_rings():
    plan = make_plan(range(1, 9))
    state = ctrl(plan, sc.RingState(1, sc.Interval.EXTENSION_GREEN, 10, 60),
                 sc.RingState(5, sc.Interval.EXTENSION_GREEN, 10, 60))
    new = sc.apply_action(plan, state, (2, 6))
    assert new.ring1.interval is sc.Interval.YELLOW
    assert new.ring1.committed_phase == 2
    assert new.ring2.interval is sc.Interval.YELLOW
    assert new.ring2.committed_phase == 6
    assert new.ring1.elapsed_ticks == 0


def test_apply_action_continue_is_identity():
    plan = make_plan(range(1, 9))
    state = ctrl(plan, sc.RingState(2, sc.Interval.EXTENSION_GREEN, 10, 60),
                 sc.RingState(6, sc.Interval.EXTENSION_GREEN, 10, 60))
    assert sc.apply_action(plan, state, (2, 6)) == state


def test_apply_action_per_ring_independence():
    # ring1 mid-clearance committed to 2; (2,5) switches only ring2
    plan = make_plan(range(1, 9))
    state = ctrl(plan, sc.RingState(1, sc.Interval.YELLOW, 10, 0, committed_phase=2),
                 sc.RingState(6, sc.Interval.EXTENSION_GREEN, 10, 60))
    new = sc.apply_action(plan, state, (2, 5))
    assert new.ring1 == state.ring1
    assert new.ring2.interval is sc.Interval.YELLOW
    assert new.ring2.committed_phase == 5


def test_apply_action_rejects_masked_pair():
    plan = make_plan(range(1, 9))
    state = ctrl(plan, sc.RingState(2, sc.Interval.MIN_GREEN, 10, 10),
                 sc.RingState(6, sc.Interval.EXTENSION_GREEN, 10, 60))
    with pytest.raises(InvalidAction):
        sc.apply_action(plan, state, (1, 5))
    with pytest.raises(InvalidAction):
        sc.apply_action(plan, state, (2, 7))  # not even a canonical same-side pair


# advance ----------------------------------------------------------------------

def test_advance_yellow_boundary_enters_red_clear():
    plan = sc.build_plan({"phases": {
        2: timing(yellow=4.0), 4: timing(), 6: timing(), 8: timing()}})
    state = ctrl(plan, sc.RingState(2, sc.Interval.YELLOW, 39, 0, committed_phase=4),
                 sc.RingState(6, sc.Interval.EXTENSION_GREEN, 0, 80))
    new, disp = sc.advance(plan, state, 0.1)
    assert new.ring1.interval is sc.Interval.RED_CLEAR
    assert new.ring1.elapsed_ticks == 0
    # the boundary tick itself served the last 0.1 s of yellow
    assert disp.color(2) == sc.YELLOW
    _, disp2 = sc.advance(plan, new, 0.1)
    assert disp2.color(2) == sc.RED


def test_advance_red_clear_boundary_starts_committed_green():
    plan = make_plan([2, 4, 6, 8])
    state = ctrl(plan, sc.RingState(2, sc.Interval.RED_CLEAR, 14, 0, committed_phase=4),
                 sc.RingState(6, sc.Interval.EXTENSION_GREEN, 0, 80))
    new, disp = sc.advance(plan, state, 0.1)
    assert new.ring1.active_phase == 4
    assert new.ring1.interval is sc.Interval.MIN_GREEN
    assert new.ring1.committed_phase is None
    assert disp.color(4) == sc.RED  # that tick served the last clearance slice
    after, disp2 = sc.advance(plan, new, 0.1)
    assert disp2.color(4) == sc.GREEN
    assert after.ring1.green_ticks == 1


def test_advance_by_controller_timestep_lands_on_decision_point():
    plan = make_plan([2, 4, 6, 8])
    state = ctrl(plan, sc.RingState(2, sc.Interval.YELLOW, 0, 0, committed_phase=4),
                 sc.RingState(6, sc.Interval.YELLOW, 0, 0, committed_phase=8))
    before = sc.compute_action_mask(plan, state)
    dt = sc.controller_timestep(plan, state)
    new, _ = sc.advance(plan, state, dt)
    after = sc.compute_action_mask(plan, new)
    # the clearance+min-green lock just expired: the mask must have widened
    assert before.valid != after.valid
    assert new.ring1.interval is sc.Interval.EXTENSION_GREEN


def test_advance_rejects_overshoot():
    plan = make_plan([2, 4, 6, 8])
    state = ctrl(plan, sc.RingState(2, sc.Interval.MIN_GREEN, 30, 30),
                 sc.RingState(6, sc.Interval.MIN_GREEN, 30, 30))
    with pytest.raises(OverAdvance):
        sc.advance(plan, state, 2.1)


def test_zero_red_clear_cascades_to_green_in_one_tick():
    plan = sc.build_plan({"phases": {
        2: timing(yellow=3.0, red_clear=0.0), 4: timing(), 6: timing(), 8: timing()}})
    state = ctrl(plan, sc.RingState(2, sc.Interval.YELLOW, 29, 0, committed_phase=4),
                 sc.RingState(6, sc.Interval.EXTENSION_GREEN, 0, 80))
    new, _ = sc.advance(plan, state, 0.1)
    assert new.ring1.active_phase == 4
    assert new.ring1.interval is sc.Interval.MIN_GREEN


# signal_state_vector ----------------------------------------------------------

def test_signal_vector_zero_while_clearing():
    plan = make_plan(range(1, 9))
    state = ctrl(plan, sc.RingState(2, sc.Interval.YELLOW, 5, 0, committed_phase=3),
                 sc.RingState(6, sc.Interval.RED_CLEAR, 5, 0, committed_phase=7))
    assert np.array_equal(sc.signal_state_vector(plan, state), np.zeros(8))


def test_signal_vector_places_elapsed_greens():
    plan = make_plan(range(1, 9))
    state = ctrl(plan, sc.RingState(2, sc.Interval.EXTENSION_GREEN, 10, 100),
                 sc.RingState(6, sc.Interval.EXTENSION_GREEN, 10, 120))
    vec = sc.signal_state_vector(plan, state)
    expected = np.zeros(8)
    expected[1] = 10.0   # phase 2
    expected[5] = 12.0   # phase 6
    assert np.array_equal(vec, expected)


def test_signal_vector_length_matches_enabled_phases():
    plan = make_plan([2, 4, 6, 8])
    state = ctrl(plan, sc.RingState(2, sc.Interval.MIN_GREEN, 50, 50),
                 sc.RingState(6, sc.Interval.MIN_GREEN, 50, 50))
    assert np.array_equal(sc.signal_state_vector(plan, state), [5.0, 0.0, 5.0, 0.0])


# decision trace ----------------------------------------------------------------

def test_decision_trace_format_is_stable():
    plan = make_plan([2, 4, 6, 8])
    state = sc.initial_state(plan)
    mask = sc.compute_action_mask(plan, state)
    line = sc.format_decision(state, mask, (2, 6))
    assert line == "t=0.0 r1=2:MG:0.0:0.0:- r2=6:MG:0.0:0.0:- mask=10 a=2,6"


def test_golden_decision_trace():
    # short scripted run on the through-only plan, frozen once and kept as a
    # regression anchor for determinism
    plan = make_plan([2, 4, 6, 8])
    state = sc.initial_state(plan)
    script = [(2, 6), (2, 6), (4, 8), (4, 8), (4, 8), (2, 6)]
    lines = []
    for pair in script:
        mask = sc.compute_action_mask(plan, state)
        lines.append(sc.format_decision(state, mask, pair))
        state = sc.apply_action(plan, state, pair)
        dt = sc.controller_timestep(plan, state)
        state, _ = sc.advance(plan, state, dt)
    assert lines == [
        "t=0.0 r1=2:MG:0.0:0.0:- r2=6:MG:0.0:0.0:- mask=10 a=2,6",
        "t=5.0 r1=2:EG:0.0:5.0:- r2=6:EG:0.0:5.0:- mask=11 a=2,6",
        "t=6.0 r1=2:EG:1.0:6.0:- r2=6:EG:1.0:6.0:- mask=11 a=4,8",
        "t=16.0 r1=4:EG:0.0:5.0:- r2=8:EG:0.0:5.0:- mask=11 a=4,8",
        "t=17.0 r1=4:EG:1.0:6.0:- r2=8:EG:1.0:6.0:- mask=11 a=4,8",
        "t=18.0 r1=4:EG:2.0:7.0:- r2=8:EG:2.0:7.0:- mask=11 a=2,6",
    ]


# properties --------------------------------------------------------------------

@given(st.data())
@settings(max_examples=60, deadline=None)
def test_random_walk_preserves_invariants(data):
    config = random_plan_config(data.draw(st.randoms(use_true_random=False)))
    plan = sc.build_plan(config)
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    audit = step_randomly(plan, rng, n_decisions=40)
    assert audit.violations == []


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_determinism_of_trajectories(seed):
    plan = make_plan(range(1, 9))

    def run():
        rng = np.random.default_rng(seed)
        state = sc.initial_state(plan)
        trace = []
        for _ in range(60):
            mask = sc.compute_action_mask(plan, state)
            choices = mask.indices()
            pair = plan.action_set[choices[rng.integers(len(choices))]]
            state = sc.apply_action(plan, state, pair)
            dt = sc.controller_timestep(plan, state)
            state, disp = sc.advance(plan, state, dt)
            trace.append(sc.format_decision(state, mask, pair) + "|" + ",".join(disp.colors))
        return trace

    assert run() == run()
