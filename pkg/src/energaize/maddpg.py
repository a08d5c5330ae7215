"""Multi-agent actor-critic learner with centralized critics.

Each dwelling gets an actor seeing only its local observation and a critic
seeing the joint observation/action vectors; targets track both via soft
updates. A single replay buffer stores joint experiences. Exploration is
hybrid: a rule-based controller during warmup, then Gaussian noise with a
linearly decaying scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import envsim, kpi, neural
from .envsim import EnvState, observation_dim, observe
from .neural import AdamState, Mlp, ShapeMismatchError, adam_init, adam_step, backward, forward, init_mlp, soft_update
from .rbc import RbcConfig, rbc_action
from .reward import RewardWeights, prosumer_normalizers, step_rewards
from .scenario import Scenario

CHECKPOINT_MANIFEST = "checkpoint-manifest-v1"


class InsufficientExperiencesError(RuntimeError):
    pass


class LayoutMismatchError(ValueError):
    pass


class NumericDivergenceError(RuntimeError):
    def __init__(self, agent_index: int, update_count: int, what: str):
        self.agent_index = agent_index
        self.update_count = update_count
        super().__init__(
            f"non-finite {what} in agent {agent_index} after {update_count} updates"
        )


@dataclass
class Hyperparams:
    gamma: float = 0.95
    tau: float = 0.01
    batch_size: int = 64
    buffer_capacity: int = 100_000
    warmup_steps: int | None = None  # None -> two episodes worth of steps
    noise_sigma_start: float = 0.3
    noise_sigma_end: float = 0.05
    noise_decay_steps: int | None = None  # None -> half of the total steps
    updates_per_step: int = 1
    actor_hidden: tuple[int, ...] = (256, 256)
    critic_units: tuple[int, ...] = (512, 256)
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    episodes: int = 15
    noise_on_observations: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.gamma < 1):
            raise ValueError("gamma must be in [0,1)")
        if not (0 < self.tau <= 1):
            raise ValueError("tau must be in (0,1]")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be >= 1")
        if self.noise_sigma_end > self.noise_sigma_start:
            raise ValueError("noise_sigma_end must be <= noise_sigma_start")
        if self.warmup_steps is not None and self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.updates_per_step < 0 or self.episodes < 0:
            raise ValueError("updates_per_step and episodes must be >= 0")


# ---------------------------------------------------------------------------
# Critic: state head feeding a trunk that takes actions at its input
# ---------------------------------------------------------------------------

@dataclass
class CriticNet:
    """Q(S, A): S passes through one hidden layer first, then A joins."""

    state_head: Mlp  # S_dim -> units[0], relu
    trunk: Mlp  # units[0] + A_dim -> units[1:] -> 1

    @property
    def params(self) -> list[np.ndarray]:
        return self.state_head.params + self.trunk.params

    @property
    def state_width(self) -> int:
        return self.state_head.widths[-1]


def init_critic(s_dim: int, a_dim: int, units: tuple[int, ...], rng) -> CriticNet:
    if len(units) < 1:
        raise ShapeMismatchError("critic needs at least one hidden width")
    head = init_mlp((s_dim, units[0]), ("relu",), rng)
    trunk_widths = (units[0] + a_dim, *units[1:], 1)
    trunk_acts = ("relu",) * (len(trunk_widths) - 2) + ("identity",)
    return CriticNet(head, init_mlp(trunk_widths, trunk_acts, rng))


def critic_forward(c: CriticNet, S: np.ndarray, A: np.ndarray):
    h, cache_h = forward(c.state_head, S)
    q, cache_t = forward(c.trunk, np.concatenate([h, A], axis=1))
    return q[:, 0], (cache_h, cache_t)


def critic_backward(c: CriticNet, cache, dq: np.ndarray):
    """Returns (param grads aligned with .params, dS, dA)."""
    cache_h, cache_t = cache
    tgrads, dz = backward(c.trunk, cache_t, dq[:, None])
    k = c.state_width
    hgrads, dS = backward(c.state_head, cache_h, dz[:, :k])
    return hgrads + tgrads, dS, dz[:, k:]


def clone_critic(c: CriticNet) -> CriticNet:
    return CriticNet(neural.clone_mlp(c.state_head), neural.clone_mlp(c.trunk))


def critic_finite(c: CriticNet) -> bool:
    return neural.all_finite(c.state_head) and neural.all_finite(c.trunk)


# ---------------------------------------------------------------------------
# Agents and replay
# ---------------------------------------------------------------------------

@dataclass
class Agent:
    index: int
    obs_slice: slice  # this agent's block inside the joint observation
    act_slice: slice  # this agent's block inside the joint action
    actor: Mlp
    critic: CriticNet
    target_actor: Mlp
    target_critic: CriticNet
    actor_opt: AdamState
    critic_opt: AdamState
    update_count: int = 0

    @property
    def obs_dim(self) -> int:
        return self.actor.widths[0]

    @property
    def action_dim(self) -> int:
        return self.actor.widths[-1]


@dataclass(frozen=True)
class Experience:
    s: np.ndarray  # joint observation
    a: np.ndarray  # joint action
    r: np.ndarray  # per-agent rewards
    s_next: np.ndarray  # joint next observation (zeros when done)
    done: bool


class ReplayBuffer:
    """Bounded ring; layout locked to the first pushed experience."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.inserted = 0
        self._data: list[Experience] = []
        self._layout: tuple[int, int, int] | None = None

    def __len__(self) -> int:
        return len(self._data)

    def push(self, exp: Experience) -> None:
        layout = (len(exp.s), len(exp.a), len(exp.r))
        if self._layout is None:
            self._layout = layout
        elif layout != self._layout:
            raise LayoutMismatchError(f"experience layout {layout} != {self._layout}")
        if len(exp.s_next) != layout[0]:
            raise LayoutMismatchError("s_next length != s length")
        if len(self._data) < self.capacity:
            self._data.append(exp)
        else:
            self._data[self.inserted % self.capacity] = exp
        self.inserted += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        if len(self._data) < batch_size:
            raise InsufficientExperiencesError(
                f"buffer holds {len(self._data)} < batch_size {batch_size}"
            )
        idx = rng.integers(0, len(self._data), size=batch_size)
        return [self._data[i] for i in idx]


def push_experience(buffer: ReplayBuffer, exp: Experience) -> None:
    buffer.push(exp)


def sample_batch(buffer: ReplayBuffer, batch_size: int, rng) -> list[Experience]:
    return buffer.sample(batch_size, rng)


def build_agents(s: Scenario, hp: Hyperparams) -> list[Agent]:
    """Fresh agents for a scenario; deterministic in hp.seed."""
    ss = np.random.SeedSequence(hp.seed)
    children = ss.spawn(s.n_dwellings)
    obs_dims = [observation_dim(s, i) for i in range(s.n_dwellings)]
    act_dims = [envsim.action_dim(s, i) for i in range(s.n_dwellings)]
    s_dim, a_dim = sum(obs_dims), sum(act_dims)
    agents = []
    o_ofs = a_ofs = 0
    for i in range(s.n_dwellings):
        rng = np.random.default_rng(children[i])
        actor = init_mlp(
            (obs_dims[i], *hp.actor_hidden, act_dims[i]),
            ("relu",) * len(hp.actor_hidden) + ("tanh",),
            rng,
        )
        critic = init_critic(s_dim, a_dim, tuple(hp.critic_units), rng)
        agents.append(
            Agent(
                index=i,
                obs_slice=slice(o_ofs, o_ofs + obs_dims[i]),
                act_slice=slice(a_ofs, a_ofs + act_dims[i]),
                actor=actor,
                critic=critic,
                target_actor=neural.clone_mlp(actor),
                target_critic=clone_critic(critic),
                actor_opt=adam_init(actor.params, hp.lr_actor),
                critic_opt=adam_init(critic.params, hp.lr_critic),
            )
        )
        o_ofs += obs_dims[i]
        a_ofs += act_dims[i]
    return agents


# ---------------------------------------------------------------------------
# Action selection
# ---------------------------------------------------------------------------

def select_action(agent: Agent, obs: np.ndarray) -> np.ndarray:
    """Deterministic policy: local observation in, action in [-1,1] out."""
    if len(obs) != agent.obs_dim:
        raise ShapeMismatchError(f"obs length {len(obs)} != {agent.obs_dim}")
    y, _ = forward(agent.actor, obs)
    return y


def sigma_at(global_step: int, hp: Hyperparams, warmup: int, decay: int) -> float:
    if global_step < warmup:
        return hp.noise_sigma_start
    frac = min(1.0, (global_step - warmup) / max(1, decay))
    return hp.noise_sigma_start + (hp.noise_sigma_end - hp.noise_sigma_start) * frac


def explore_action(
    agent: Agent,
    obs: np.ndarray,
    global_step: int,
    rbc_act: np.ndarray,
    hp: Hyperparams,
    rng: np.random.Generator,
    warmup: int,
    decay: int,
) -> np.ndarray:
    """Hybrid exploration: the rule-based action during warmup, then the
    policy plus decaying Gaussian noise (on the action by default; on the
    observation when hp.noise_on_observations is set)."""
    if global_step < warmup:
        return np.asarray(rbc_act, dtype=float)
    sigma = sigma_at(global_step, hp, warmup, decay)
    if hp.noise_on_observations:
        noisy = obs + rng.normal(0.0, sigma, size=len(obs))
        return np.clip(select_action(agent, noisy), -1.0, 1.0)
    eps = rng.normal(0.0, sigma, size=agent.action_dim)
    return np.clip(select_action(agent, obs) + eps, -1.0, 1.0)


# ---------------------------------------------------------------------------
# Updates
# ---------------------------------------------------------------------------

@dataclass
class BatchArrays:
    S: np.ndarray
    A: np.ndarray
    R: np.ndarray
    S2: np.ndarray
    done: np.ndarray

    @classmethod
    def from_experiences(cls, batch: list[Experience]) -> "BatchArrays":
        return cls(
            S=np.stack([e.s for e in batch]),
            A=np.stack([e.a for e in batch]),
            R=np.stack([e.r for e in batch]),
            S2=np.stack([e.s_next for e in batch]),
            done=np.array([1.0 if e.done else 0.0 for e in batch]),
        )


def bellman_targets(
    agent: Agent, batch: BatchArrays, all_target_actors: list[Mlp], hp: Hyperparams,
    obs_slices: list[slice],
) -> np.ndarray:
    """y = r_i + gamma * (1 - done) * Q'_i(S', A'), next actions from the
    target actors. done masks the bootstrap term entirely."""
    a2 = [forward(ta, batch.S2[:, sl])[0] for ta, sl in zip(all_target_actors, obs_slices)]
    A2 = np.concatenate(a2, axis=1)
    q2, _ = critic_forward(agent.target_critic, batch.S2, A2)
    return batch.R[:, agent.index] + hp.gamma * (1.0 - batch.done) * q2


def critic_update(
    agent: Agent, batch: BatchArrays, all_target_actors: list[Mlp], hp: Hyperparams,
    obs_slices: list[slice],
) -> float:
    """One TD step on the critic; returns the pre-update mean squared TD."""
    B = len(batch.done)
    y = bellman_targets(agent, batch, all_target_actors, hp, obs_slices)
    q, cache = critic_forward(agent.critic, batch.S, batch.A)
    td = y - q
    loss = float(np.mean(td * td))
    grads, _, _ = critic_backward(agent.critic, cache, -2.0 * td / B)
    adam_step(agent.critic.params, grads, agent.critic_opt)
    agent.update_count += 1
    return loss


def actor_update(agent: Agent, batch: BatchArrays, hp: Hyperparams) -> float:
    """One ascent step on mean Q with other agents' stored actions fixed;
    returns the pre-update objective."""
    B = len(batch.done)
    o_i = batch.S[:, agent.obs_slice]
    a_i, cache_a = forward(agent.actor, o_i)
    A_mod = batch.A.copy()
    A_mod[:, agent.act_slice] = a_i
    q, cache_c = critic_forward(agent.critic, batch.S, A_mod)
    objective = float(np.mean(q))
    _, _, dA = critic_backward(agent.critic, cache_c, np.full(B, 1.0 / B))
    agrads, _ = backward(agent.actor, cache_a, dA[:, agent.act_slice])
    adam_step(agent.actor.params, [-g for g in agrads], agent.actor_opt)
    return objective


def soft_update_agent(agent: Agent, tau: float) -> None:
    soft_update(agent.target_actor.params, agent.actor.params, tau)
    soft_update(agent.target_critic.params, agent.critic.params, tau)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogRow:
    episode: int
    agent: int
    mean_reward: float
    mean_td_loss: float  # nan before the first update
    sigma: float


@dataclass
class TrainResult:
    agents: list[Agent]
    log: list[LogRow]
    warmup_steps: int
    noise_decay_steps: int


def train(
    s: Scenario,
    hp: Hyperparams,
    weights: RewardWeights | None = None,
    rbc_cfg: RbcConfig | None = None,
) -> TrainResult:
    """Full training run: rollout with hybrid exploration, store joint
    experiences, and once the buffer can fill a batch run per-agent critic
    then actor updates plus target soft updates every environment step."""
    weights = weights or RewardWeights()
    rbc_cfg = rbc_cfg or RbcConfig()
    agents = build_agents(s, hp)
    T = s.horizon_steps
    total_steps = hp.episodes * T
    warmup = hp.warmup_steps if hp.warmup_steps is not None else 2 * T
    decay = hp.noise_decay_steps if hp.noise_decay_steps is not None else max(1, total_steps // 2)
    ss = np.random.SeedSequence((hp.seed, 0xE0))
    rng_explore, rng_sample = (np.random.default_rng(c) for c in ss.spawn(2))
    buffer = ReplayBuffer(hp.buffer_capacity)
    normalizers = prosumer_normalizers(s)
    obs_slices = [ag.obs_slice for ag in agents]
    target_actors = [ag.target_actor for ag in agents]
    s_dim = sum(ag.obs_dim for ag in agents)
    log: list[LogRow] = []

    for ep in range(hp.episodes):
        st = envsim.reset(s)
        obs = [observe(s, st, i) for i in range(s.n_dwellings)]
        e_prev: float | None = None
        reward_sums = np.zeros(s.n_dwellings)
        td_sums = np.zeros(s.n_dwellings)
        td_counts = 0
        for t in range(T):
            g = ep * T + t
            actions = [
                explore_action(
                    ag, obs[i], g, rbc_action(s, st, i, rbc_cfg), hp, rng_explore,
                    warmup, decay,
                )
                for i, ag in enumerate(agents)
            ]
            res = envsim.step(s, st, actions)
            if e_prev is None:
                e_prev = res.community_net
            breakdowns = step_rewards(s, res, t, e_prev, weights, normalizers)
            r = np.array([b.total for b in breakdowns])
            reward_sums += r
            done = t == T - 1
            s_next = (
                np.zeros(s_dim)
                if done
                else np.concatenate([observe(s, res.state, i) for i in range(s.n_dwellings)])
            )
            buffer.push(
                Experience(
                    s=np.concatenate(obs),
                    a=np.concatenate([np.asarray(a, dtype=float) for a in actions]),
                    r=r,
                    s_next=s_next,
                    done=done,
                )
            )
            if len(buffer) >= hp.batch_size:
                for _ in range(hp.updates_per_step):
                    batch = BatchArrays.from_experiences(
                        buffer.sample(hp.batch_size, rng_sample)
                    )
                    for ag in agents:
                        loss = critic_update(ag, batch, target_actors, hp, obs_slices)
                        objective = actor_update(ag, batch, hp)
                        soft_update_agent(ag, hp.tau)
                        if not (np.isfinite(loss) and np.isfinite(objective)):
                            raise NumericDivergenceError(
                                ag.index, ag.update_count, "loss"
                            )
                        td_sums[ag.index] += loss
                    td_counts += 1
            st = res.state
            e_prev = res.community_net
            if not done:
                obs = [observe(s, st, i) for i in range(s.n_dwellings)]
        for ag in agents:
            if not (neural.all_finite(ag.actor) and critic_finite(ag.critic)):
                raise NumericDivergenceError(ag.index, ag.update_count, "parameter")
        sig = sigma_at(ep * T + T - 1, hp, warmup, decay)
        for i in range(s.n_dwellings):
            log.append(
                LogRow(
                    episode=ep,
                    agent=i,
                    mean_reward=float(reward_sums[i] / T),
                    mean_td_loss=float(td_sums[i] / td_counts) if td_counts else float("nan"),
                    sigma=sig,
                )
            )
    return TrainResult(agents=agents, log=log, warmup_steps=warmup, noise_decay_steps=decay)


def write_training_log(log: list[LogRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("episode,agent,mean_reward,mean_td_loss,sigma\n")
        for row in log:
            fh.write(
                f"{row.episode},{row.agent},{row.mean_reward!r},"
                f"{row.mean_td_loss!r},{row.sigma!r}\n"
            )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def policy_from_agents(agents: list[Agent]):
    def policy(s: Scenario, st: EnvState):
        return [select_action(ag, observe(s, st, ag.index)) for ag in agents]

    return policy


def evaluate_with_events(s: Scenario, agents: list[Agent]):
    """Deterministic rollout; returns (trace, departure events)."""
    ro = envsim.rollout_policy(s, policy_from_agents(agents))
    return kpi.trace_from_rollout(s, ro), ro.departures


def evaluate_deterministic(s: Scenario, agents: list[Agent]) -> kpi.Trace:
    """One noise-free, learning-free episode under the trained actors."""
    return evaluate_with_events(s, agents)[0]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def hp_to_doc(hp: Hyperparams) -> dict:
    return {
        "gamma": hp.gamma,
        "tau": hp.tau,
        "batch_size": hp.batch_size,
        "buffer_capacity": hp.buffer_capacity,
        "warmup_steps": hp.warmup_steps,
        "noise_sigma_start": hp.noise_sigma_start,
        "noise_sigma_end": hp.noise_sigma_end,
        "noise_decay_steps": hp.noise_decay_steps,
        "updates_per_step": hp.updates_per_step,
        "actor_hidden": list(hp.actor_hidden),
        "critic_units": list(hp.critic_units),
        "lr_actor": hp.lr_actor,
        "lr_critic": hp.lr_critic,
        "episodes": hp.episodes,
        "noise_on_observations": hp.noise_on_observations,
        "seed": hp.seed,
    }


def hp_from_doc(doc: dict) -> Hyperparams:
    doc = dict(doc)
    doc["actor_hidden"] = tuple(doc["actor_hidden"])
    doc["critic_units"] = tuple(doc["critic_units"])
    return Hyperparams(**doc)


def _critic_doc(c: CriticNet) -> dict:
    return {
        "format": "critic-v1",
        "state_head": neural.mlp_to_doc(c.state_head),
        "trunk": neural.mlp_to_doc(c.trunk),
    }


def _critic_from_doc(doc: dict) -> CriticNet:
    if doc.get("format") != "critic-v1":
        raise ValueError(f"unsupported critic format: {doc.get('format')!r}")
    return CriticNet(
        neural.mlp_from_doc(doc["state_head"]), neural.mlp_from_doc(doc["trunk"])
    )


def save_checkpoint(
    directory: str | Path,
    agents: list[Agent],
    hp: Hyperparams,
    scenario_fingerprint: str = "",
    extra: dict | None = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for ag in agents:
        neural.save_mlp(ag.actor, directory / f"agent{ag.index}_actor.json")
        neural.save_mlp(ag.target_actor, directory / f"agent{ag.index}_target_actor.json")
        for name, net in (("critic", ag.critic), ("target_critic", ag.target_critic)):
            with open(directory / f"agent{ag.index}_{name}.json", "w", encoding="utf-8", newline="\n") as fh:
                json.dump(_critic_doc(net), fh)
                fh.write("\n")
    manifest = {
        "format": CHECKPOINT_MANIFEST,
        "n_agents": len(agents),
        "obs_dims": [ag.obs_dim for ag in agents],
        "action_dims": [ag.action_dim for ag in agents],
        "hyperparams": hp_to_doc(hp),
        "seed": hp.seed,
        "scenario_fingerprint": scenario_fingerprint,
    }
    if extra:
        manifest.update(extra)
    with open(directory / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def load_checkpoint(directory: str | Path) -> tuple[list[Agent], dict]:
    """Rebuild agents from a checkpoint directory. Optimizer state is not
    persisted: resuming training restarts Adam accumulators; exact
    re-evaluation needs only the parameters restored here."""
    directory = Path(directory)
    with open(directory / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CHECKPOINT_MANIFEST:
        raise ValueError(f"unsupported checkpoint manifest: {manifest.get('format')!r}")
    hp = hp_from_doc(manifest["hyperparams"])
    agents = []
    o_ofs = a_ofs = 0
    for i in range(manifest["n_agents"]):
        actor = neural.load_mlp(directory / f"agent{i}_actor.json")
        target_actor = neural.load_mlp(directory / f"agent{i}_target_actor.json")
        with open(directory / f"agent{i}_critic.json", encoding="utf-8") as fh:
            critic = _critic_from_doc(json.load(fh))
        with open(directory / f"agent{i}_target_critic.json", encoding="utf-8") as fh:
            target_critic = _critic_from_doc(json.load(fh))
        od, ad = manifest["obs_dims"][i], manifest["action_dims"][i]
        agents.append(
            Agent(
                index=i,
                obs_slice=slice(o_ofs, o_ofs + od),
                act_slice=slice(a_ofs, a_ofs + ad),
                actor=actor,
                critic=critic,
                target_actor=target_actor,
                target_critic=target_critic,
                actor_opt=adam_init(actor.params, hp.lr_actor),
                critic_opt=adam_init(critic.params, hp.lr_critic),
            )
        )
        o_ofs += od
        a_ofs += ad
    return agents, manifest
