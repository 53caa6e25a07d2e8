"""Multi-agent PPO: per-intersection actors, per-agent centralized critics.

Training is centralized, execution decentralized: each actor samples from a
masked categorical over its own action set conditioned only on its local
observation, while each agent's critic values the concatenation of every
agent's observation (subject agent first, the rest in corridor order).
One update runs per episode: one-step TD advantages and targets, then
several epochs of shuffled minibatches optimizing the clipped surrogate
(actor) and squared TD error (critic) with Adam.

Steps where the mask leaves a single action are kept in the buffer; the
degenerate distribution makes their actor gradient exactly zero while the
critic still learns from their rewards.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import nn
from . import signal_core as sc
from .env import CorridorEnv
from .errors import CheckpointMismatch, NonFiniteLoss, SizeMismatch
from .scenario import Scenario

ACTOR_HIDDEN = (64, 128)
CRITIC_HIDDEN = (128, 256, 256)


@dataclass
class Hyperparams:
    clip_eps: float = 0.2
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    gamma: float = 0.99
    epochs_per_update: int = 4
    minibatch_size: int = 256
    entropy_coef: float = 0.0
    normalize_advantages: bool = True
    base_dt: float = 1.0
    episode_len_s: float = 1800.0

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must be in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        sc.seconds_to_ticks(self.episode_len_s, "episode_len_s", minimum=1)


@dataclass(frozen=True)
class AgentSpec:
    intersection_id: str
    obs_size: int
    action_count: int
    global_obs_size: int
    actor_hidden: tuple[int, ...] = ACTOR_HIDDEN
    critic_hidden: tuple[int, ...] = CRITIC_HIDDEN


class Agent:
    def __init__(self, spec: AgentSpec, rng: Optional[np.random.Generator] = None):
        self.spec = spec
        self.id = spec.intersection_id
        self.actor = nn.DenseNet(
            [spec.obs_size, *spec.actor_hidden, spec.action_count], rng=rng)
        self.critic = nn.DenseNet(
            [spec.global_obs_size, *spec.critic_hidden, 1], rng=rng)
        self.actor_adam = nn.AdamState.for_params(self.actor.parameters())
        self.critic_adam = nn.AdamState.for_params(self.critic.parameters())

    def value(self, global_obs: np.ndarray) -> float:
        return float(self.critic.forward(global_obs)[0])


def agent_specs_for(env: CorridorEnv) -> list[AgentSpec]:
    sizes = {iid: env.observation_size(iid) for iid in env.agent_ids}
    total = sum(sizes.values())
    return [
        AgentSpec(intersection_id=iid, obs_size=sizes[iid],
                  action_count=env.action_count(iid), global_obs_size=total)
        for iid in env.agent_ids
    ]


def build_agents(scenario: Scenario, seed: int) -> list[Agent]:
    env = CorridorEnv(scenario, seed=0)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA11CE)))
    return [Agent(spec, rng=rng) for spec in agent_specs_for(env)]


def assemble_global_observation(local_obs: Mapping[str, np.ndarray], subject: str,
                                order: Sequence[str],
                                expected_size: Optional[int] = None) -> np.ndarray:
    """Concatenate all observations with the subject agent's first."""
    parts = [np.asarray(local_obs[subject], dtype=np.float64)]
    parts.extend(np.asarray(local_obs[iid], dtype=np.float64)
                 for iid in order if iid != subject)
    out = np.concatenate(parts)
    if expected_size is not None and out.size != expected_size:
        raise SizeMismatch(f"global observation has {out.size} entries, "
                           f"expected {expected_size}")
    return out


class RolloutBuffer:
    """Per-agent trajectories; all agents decide at every global step."""

    FIELDS = ("obs", "global_obs", "mask", "action", "log_prob", "reward",
              "value", "terminal", "dt")

    def __init__(self, agent_ids: Sequence[str]):
        self.agent_ids = tuple(agent_ids)
        self.data = {iid: {f: [] for f in self.FIELDS} for iid in self.agent_ids}

    def __len__(self) -> int:
        return len(self.data[self.agent_ids[0]]["reward"])

    def append(self, agent_id: str, **fields) -> None:
        store = self.data[agent_id]
        for name, value in fields.items():
            store[name].append(value)

    def mark_terminal(self) -> None:
        for iid in self.agent_ids:
            if self.data[iid]["terminal"]:
                self.data[iid]["terminal"][-1] = True

    def arrays(self, agent_id: str) -> dict[str, np.ndarray]:
        store = self.data[agent_id]
        return {
            "obs": np.asarray(store["obs"], dtype=np.float64),
            "global_obs": np.asarray(store["global_obs"], dtype=np.float64),
            "mask": np.asarray(store["mask"], dtype=bool),
            "action": np.asarray(store["action"], dtype=np.int64),
            "log_prob": np.asarray(store["log_prob"], dtype=np.float64),
            "reward": np.asarray(store["reward"], dtype=np.float64),
            "value": np.asarray(store["value"], dtype=np.float64),
            "terminal": np.asarray(store["terminal"], dtype=bool),
            "dt": np.asarray(store["dt"], dtype=np.float64),
        }


def compute_advantages(rewards: np.ndarray, values: np.ndarray, terminals: np.ndarray,
                       gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """One-step TD advantage and critic target per step.

    Non-terminal: Adv = r + gamma*V(next) - V, target = r + gamma*V(next);
    terminal: Adv = r - V, target = r.
    """
    n = len(rewards)
    next_values = np.zeros(n, dtype=np.float64)
    if n > 1:
        next_values[:-1] = values[1:]
    bootstrap = np.where(terminals, 0.0, gamma * next_values)
    targets = rewards + bootstrap
    advantages = targets - values
    return advantages, targets


def clipped_surrogate(ratios: np.ndarray, advantages: np.ndarray,
                      clip_eps: float) -> np.ndarray:
    """Per-sample pessimistic surrogate min(r*A, clip(r)*A)."""
    ratios = np.asarray(ratios, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    clipped = np.clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps)
    return np.minimum(ratios * advantages, clipped * advantages)


def _actor_loss_and_grads(actor: nn.DenseNet, obs: np.ndarray, masks: np.ndarray,
                          actions: np.ndarray, old_log_probs: np.ndarray,
                          advantages: np.ndarray, clip_eps: float,
                          entropy_coef: float):
    logits, cache = actor.forward_cached(obs)
    probs, log_probs = nn.masked_log_softmax(logits, masks)
    n = len(actions)
    rows = np.arange(n)
    log_prob_a = log_probs[rows, actions]
    ratio = np.exp(log_prob_a - old_log_probs)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr_raw = ratio * advantages
    surr_clip = clipped * advantages
    take_raw = surr_raw <= surr_clip
    objective = np.where(take_raw, surr_raw, surr_clip)
    inside = (ratio > 1.0 - clip_eps) & (ratio < 1.0 + clip_eps)
    dobj_dlogp = np.where(take_raw | inside, surr_raw, 0.0)

    safe_logp = np.where(masks, log_probs, 0.0)
    entropy_terms = np.where(probs > 0.0, probs * safe_logp, 0.0)
    entropy = -entropy_terms.sum(axis=1)

    loss = -objective.mean() - entropy_coef * entropy.mean()

    dlogits = -probs.copy()
    dlogits[rows, actions] += 1.0
    dlogits *= (-dobj_dlogp / n)[:, None]
    if entropy_coef != 0.0:
        d_entropy = np.where(probs > 0.0, -probs * (safe_logp + entropy[:, None]), 0.0)
        dlogits += (-entropy_coef / n) * d_entropy
    grads = actor.backward(cache, dlogits)
    return loss, grads, ratio, entropy


def _critic_loss_and_grads(critic: nn.DenseNet, global_obs: np.ndarray,
                           targets: np.ndarray):
    values, cache = critic.forward_cached(global_obs)
    values = values[:, 0]
    errors = values - targets
    loss = float(np.mean(errors ** 2))
    grads = critic.backward(cache, (2.0 * errors / len(errors))[:, None])
    return loss, grads


def _all_finite(loss: float, grads: Sequence[np.ndarray]) -> bool:
    return np.isfinite(loss) and all(np.isfinite(g).all() for g in grads)


def ppo_update(agents: Sequence[Agent], buffer: RolloutBuffer, hp: Hyperparams,
               rng: np.random.Generator) -> dict:
    """One PPO update over the episode buffer; returns diagnostics.

    On any non-finite loss or gradient the update is aborted, every agent's
    pre-update parameters are restored, and NonFiniteLoss is raised.
    """
    snapshots = [
        (agent.actor.copy_parameters(), agent.critic.copy_parameters())
        for agent in agents
    ]
    stats = {"ratio_max_dev_first_epoch": 0.0, "actor_loss": 0.0,
             "critic_loss": 0.0, "entropy": 0.0}

    def abort():
        for agent, (actor_params, critic_params) in zip(agents, snapshots):
            agent.actor.set_parameters(actor_params)
            agent.critic.set_parameters(critic_params)
        raise NonFiniteLoss("non-finite loss or gradient during PPO update")

    for agent in agents:
        data = buffer.arrays(agent.id)
        n = len(data["reward"])
        if n == 0:
            continue
        advantages, targets = compute_advantages(
            data["reward"], data["value"], data["terminal"], hp.gamma)
        if not np.isfinite(advantages).all():
            abort()
        if hp.normalize_advantages and n > 1:
            advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

        # ratio identity diagnostic before any parameter movement
        logits = agent.actor.forward(data["obs"])
        _, log_probs = nn.masked_log_softmax(logits, data["mask"])
        ratio0 = np.exp(log_probs[np.arange(n), data["action"]] - data["log_prob"])
        stats["ratio_max_dev_first_epoch"] = max(
            stats["ratio_max_dev_first_epoch"], float(np.abs(ratio0 - 1.0).max()))

        for _ in range(hp.epochs_per_update):
            order = rng.permutation(n)
            for start in range(0, n, hp.minibatch_size):
                batch = order[start:start + hp.minibatch_size]
                actor_loss, actor_grads, _, entropy = _actor_loss_and_grads(
                    agent.actor, data["obs"][batch], data["mask"][batch],
                    data["action"][batch], data["log_prob"][batch],
                    advantages[batch], hp.clip_eps, hp.entropy_coef)
                if not _all_finite(actor_loss, actor_grads):
                    abort()
                critic_loss, critic_grads = _critic_loss_and_grads(
                    agent.critic, data["global_obs"][batch], targets[batch])
                if not _all_finite(critic_loss, critic_grads):
                    abort()
                nn.adam_step(agent.actor.parameters(), actor_grads,
                             agent.actor_adam, hp.actor_lr)
                nn.adam_step(agent.critic.parameters(), critic_grads,
                             agent.critic_adam, hp.critic_lr)
                stats["actor_loss"] = float(actor_loss)
                stats["critic_loss"] = float(critic_loss)
                stats["entropy"] = float(entropy.mean())
    return stats


def select_actions(agents: Sequence[Agent], local_obs: Mapping[str, np.ndarray],
                   masks: Mapping[str, np.ndarray], rng: Optional[np.random.Generator],
                   training: bool = True) -> dict[str, tuple[int, float]]:
    """Per-agent (action index, log-probability).

    Training samples from the masked distribution; evaluation takes the
    highest-probability valid action, deterministically.
    """
    out = {}
    for agent in agents:
        dist = nn.masked_categorical(agent.actor.forward(local_obs[agent.id]),
                                     masks[agent.id])
        action = dist.sample(rng) if training else dist.argmax()
        out[agent.id] = (action, dist.log_prob(action))
    return out


@dataclass
class EpisodeStats:
    steps: int
    sim_seconds: float
    mean_reward: dict[str, float] = field(default_factory=dict)
    action_trace: list[tuple] = field(default_factory=list)

    @property
    def global_mean_reward(self) -> float:
        if not self.mean_reward:
            return 0.0
        return float(np.mean(list(self.mean_reward.values())))


def run_episode(env: CorridorEnv, agents: Sequence[Agent], hp: Hyperparams,
                rng: Optional[np.random.Generator], training: bool = True,
                keep_trace: bool = False) -> tuple[Optional[RolloutBuffer], EpisodeStats]:
    """Roll one episode; returns the filled buffer (training) and stats."""
    order = env.agent_ids
    by_id = {a.id: a for a in agents}
    buffer = RolloutBuffer(order) if training else None
    reward_sums = {iid: 0.0 for iid in order}
    steps = 0
    trace: list[tuple] = []
    while not env.done:
        local = {iid: env.observe(iid) for iid in order}
        masks = {iid: env.action_mask(iid).as_array() for iid in order}
        chosen = select_actions(agents, local, masks, rng, training=training)
        pairs = {iid: env.plans[iid].action_set[chosen[iid][0]] for iid in order}
        if training:
            globals_ = {
                iid: assemble_global_observation(
                    local, iid, order, expected_size=by_id[iid].spec.global_obs_size)
                for iid in order
            }
            values = {iid: by_id[iid].value(globals_[iid]) for iid in order}
        result = env.step(pairs)
        if keep_trace:
            trace.append(tuple(pairs[iid] for iid in order))
        for iid in order:
            reward_sums[iid] += result.rewards[iid]
            if training:
                buffer.append(
                    iid, obs=local[iid], global_obs=globals_[iid], mask=masks[iid],
                    action=chosen[iid][0], log_prob=chosen[iid][1],
                    reward=result.rewards[iid], value=values[iid],
                    terminal=False, dt=result.dt)
        steps += 1
    if training and len(buffer):
        buffer.mark_terminal()
    stats = EpisodeStats(
        steps=steps,
        sim_seconds=env.clock,
        mean_reward={iid: (reward_sums[iid] / steps if steps else 0.0) for iid in order},
        action_trace=trace,
    )
    return buffer, stats


# -- training loop -----------------------------------------------------------------


def episode_seed(master_seed: int, episode: int) -> int:
    return int(np.random.SeedSequence((master_seed, episode)).generate_state(1, np.uint64)[0])


@dataclass
class TrainResult:
    curve: list[dict]
    checkpoint_path: Optional[Path]
    agents: list[Agent]


def train(scenario: Scenario, hp: Hyperparams, n_episodes: int, seed: int,
          out_dir: Optional[Path] = None, checkpoint_every: int = 25,
          resume: bool = False,
          progress: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Per-episode loop: fresh demand seed, rollout, one PPO update.

    Learning-curve rows carry per-agent mean step rewards.  Checkpoints are
    written every ``checkpoint_every`` episodes and at the end; ``resume``
    restarts from the latest checkpoint in ``out_dir``, including optimizer
    moments and the policy RNG stream, so an interrupted run continues as
    if it had never stopped.
    """
    checkpoint_path = Path(out_dir) / "checkpoint.npz" if out_dir is not None else None
    agents = build_agents(scenario, seed)
    policy_rng = np.random.default_rng(np.random.SeedSequence((seed, 0xB0B)))
    start_episode = 0
    curve: list[dict] = []
    if resume and checkpoint_path is not None and checkpoint_path.exists():
        loaded = load_checkpoint(checkpoint_path)
        agents = loaded.agents
        start_episode = loaded.episode
        curve = list(loaded.curve)
        if loaded.rng_state is not None:
            policy_rng.bit_generator.state = loaded.rng_state

    if checkpoint_path is not None and start_episode == 0:
        save_checkpoint(checkpoint_path, agents, hp, scenario.name, 0, curve,
                        policy_rng.bit_generator.state)

    for ep in range(start_episode, n_episodes):
        env = CorridorEnv(scenario, seed=episode_seed(seed, ep),
                          episode_len_s=hp.episode_len_s, base_dt=hp.base_dt)
        buffer, ep_stats = run_episode(env, agents, hp, policy_rng, training=True)
        update_stats = ppo_update(agents, buffer, hp, policy_rng)
        row = {"episode": ep, "mean_reward": ep_stats.global_mean_reward,
               "steps": ep_stats.steps}
        for iid in env.agent_ids:
            row[f"reward_{iid}"] = ep_stats.mean_reward[iid]
        row.update({f"diag_{k}": v for k, v in update_stats.items()})
        curve.append(row)
        if progress is not None:
            progress(row)
        if checkpoint_path is not None and (ep + 1) % checkpoint_every == 0:
            save_checkpoint(checkpoint_path, agents, hp, scenario.name, ep + 1, curve,
                            policy_rng.bit_generator.state)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, agents, hp, scenario.name, n_episodes, curve,
                        policy_rng.bit_generator.state)
    return TrainResult(curve=curve, checkpoint_path=checkpoint_path, agents=agents)


# -- checkpointing --------------------------------------------------------------------


@dataclass
class Checkpoint:
    agents: list[Agent]
    hyperparams: dict
    scenario_name: str
    episode: int
    curve: list[dict]
    rng_state: Optional[dict]


def save_checkpoint(path: Path, agents: Sequence[Agent], hp: Hyperparams,
                    scenario_name: str, episode: int, curve: Sequence[dict],
                    rng_state: Optional[dict] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {}
    meta = {
        "version": nn.CHECKPOINT_VERSION,
        "scenario": scenario_name,
        "episode": int(episode),
        "hyperparams": asdict(hp),
        "curve": list(curve),
        "rng_state": rng_state,
        "agents": [],
    }
    for k, agent in enumerate(agents):
        meta["agents"].append({
            "id": agent.id,
            "obs_size": agent.spec.obs_size,
            "action_count": agent.spec.action_count,
            "global_obs_size": agent.spec.global_obs_size,
            "actor_hidden": list(agent.spec.actor_hidden),
            "critic_hidden": list(agent.spec.critic_hidden),
            "actor_adam_step": agent.actor_adam.step,
            "critic_adam_step": agent.critic_adam.step,
        })
        nn.dump_net_arrays(f"a{k}_actor", agent.actor, arrays)
        nn.dump_net_arrays(f"a{k}_critic", agent.critic, arrays)
        nn.dump_adam_arrays(f"a{k}_actor_adam", agent.actor_adam, arrays)
        nn.dump_adam_arrays(f"a{k}_critic_adam", agent.critic_adam, arrays)
    tmp = path.with_suffix(".tmp.npz")
    with open(tmp, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **arrays)
    tmp.replace(path)


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != nn.CHECKPOINT_VERSION:
            raise CheckpointMismatch(f"unsupported checkpoint version {meta.get('version')}")
        agents = []
        for k, info in enumerate(meta["agents"]):
            spec = AgentSpec(
                intersection_id=info["id"], obs_size=info["obs_size"],
                action_count=info["action_count"],
                global_obs_size=info["global_obs_size"],
                actor_hidden=tuple(info["actor_hidden"]),
                critic_hidden=tuple(info["critic_hidden"]),
            )
            agent = Agent(spec)
            agent.actor = nn.load_net_arrays(
                f"a{k}_actor", [spec.obs_size, *spec.actor_hidden, spec.action_count], data)
            agent.critic = nn.load_net_arrays(
                f"a{k}_critic", [spec.global_obs_size, *spec.critic_hidden, 1], data)
            agent.actor_adam = nn.load_adam_arrays(
                f"a{k}_actor_adam", info["actor_adam_step"],
                agent.actor.n_layers * 2, data)
            agent.critic_adam = nn.load_adam_arrays(
                f"a{k}_critic_adam", info["critic_adam_step"],
                agent.critic.n_layers * 2, data)
            agents.append(agent)
    rng_state = meta.get("rng_state")
    return Checkpoint(agents=agents, hyperparams=meta["hyperparams"],
                      scenario_name=meta["scenario"], episode=meta["episode"],
                      curve=meta.get("curve", []), rng_state=rng_state)


def check_compatible(agents: Sequence[Agent], env: CorridorEnv) -> None:
    """Raise CheckpointMismatch unless agent shapes match the environment."""
    expected = {s.intersection_id: s for s in agent_specs_for(env)}
    loaded = {a.id: a.spec for a in agents}
    if set(expected) != set(loaded):
        raise CheckpointMismatch(
            f"checkpoint agents {sorted(loaded)} vs scenario {sorted(expected)}")
    for iid, spec in expected.items():
        got = loaded[iid]
        if (got.obs_size, got.action_count, got.global_obs_size) != (
                spec.obs_size, spec.action_count, spec.global_obs_size):
            raise CheckpointMismatch(f"agent {iid} shapes differ from the scenario")
