"""Coupled corridor environment: one simulator plus one controller per signal.

A step applies a phase pair per intersection, derives the shared time step
as the minimum controller time step (floored at 0.1 s, capped at the
episode end), advances all controllers tick by tick while feeding their
displays to the simulator, and returns the post-advance rewards.
Observations are scaled: lane counts by the lane's storage within the
observation range, elapsed greens by 120 s.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import microsim
from . import signal_core as sc
from .scenario import Scenario

GREEN_SCALE_S = 120.0


@dataclass(frozen=True)
class StepResult:
    dt: float
    rewards: Mapping[str, float]
    done: bool


class CorridorEnv:
    def __init__(self, scenario: Scenario, seed: int, episode_len_s: float = 1800.0,
                 base_dt: float = 1.0):
        self.scenario = scenario
        self.episode_len_ticks = sc.seconds_to_ticks(episode_len_s, "episode_len_s", minimum=1)
        self.base_dt = base_dt
        self.agent_ids: tuple[str, ...] = scenario.intersection_ids
        self.sim = microsim.Simulator(scenario.network, seed=seed)
        self.plans = {iid: self.sim.plans[iid] for iid in self.agent_ids}
        self.states = {iid: sc.initial_state(self.plans[iid]) for iid in self.agent_ids}
        self._caps = {iid: self.sim.lane_capacities(iid) for iid in self.agent_ids}
        self._obs_sizes = {
            iid: self.sim.observation_size(iid) + self.plans[iid].n_p
            for iid in self.agent_ids
        }

    # -- sizes -----------------------------------------------------------------

    def observation_size(self, intersection_id: str) -> int:
        return self._obs_sizes[intersection_id]

    def action_count(self, intersection_id: str) -> int:
        return self.plans[intersection_id].n_actions

    # -- views ------------------------------------------------------------------

    @property
    def clock_ticks(self) -> int:
        return self.sim.clock_ticks

    @property
    def clock(self) -> float:
        return self.sim.clock

    @property
    def done(self) -> bool:
        return self.sim.clock_ticks >= self.episode_len_ticks

    def observe(self, intersection_id: str) -> np.ndarray:
        counts = self.sim.vehicle_state_vector(intersection_id) / self._caps[intersection_id]
        greens = sc.signal_state_vector(
            self.plans[intersection_id], self.states[intersection_id]) / GREEN_SCALE_S
        return np.concatenate([counts, greens])

    def action_mask(self, intersection_id: str) -> sc.ActionMask:
        return sc.compute_action_mask(self.plans[intersection_id],
                                      self.states[intersection_id])

    def controller_state(self, intersection_id: str) -> sc.ControllerState:
        return self.states[intersection_id]

    def detector_readings(self, intersection_id: str) -> microsim.DetectorReadings:
        return self.sim.detector_readings(intersection_id)

    # -- dynamics ----------------------------------------------------------------

    def step(self, actions: Mapping[str, tuple[int, int]]) -> StepResult:
        for iid in self.agent_ids:
            self.states[iid] = sc.apply_action(self.plans[iid], self.states[iid],
                                               actions[iid])
        dt = min(sc.controller_timestep(self.plans[iid], self.states[iid], self.base_dt)
                 for iid in self.agent_ids)
        dt_ticks = min(round(dt * 10), self.episode_len_ticks - self.sim.clock_ticks)
        for _ in range(dt_ticks):
            displays = {}
            for iid in self.agent_ids:
                self.states[iid], disp = sc.advance(self.plans[iid], self.states[iid], 0.1)
                displays[iid] = disp.as_dict()
            self.sim.tick(displays)
        rewards = {iid: self.sim.reward(iid) for iid in self.agent_ids}
        return StepResult(dt=dt_ticks / 10.0, rewards=rewards, done=self.done)


def run_baseline(env: CorridorEnv, controllers: Mapping[str, object]) -> None:
    """Drive an environment to the end of its episode with rule controllers.

    ``controllers`` maps intersection id to an object with
    ``decide(controller_state, detector_readings) -> pair``.
    """
    while not env.done:
        actions = {}
        for iid in env.agent_ids:
            actions[iid] = controllers[iid].decide(env.controller_state(iid),
                                                   env.detector_readings(iid))
        env.step(actions)
