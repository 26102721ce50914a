"""Deterministic 4x4 Frozen Lake with randomised holes, and deep Q-learning."""
from __future__ import annotations

import collections
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .models import RAW, ModelSpec
from .training import Adam

SIZE = 4
N_TILES = SIZE * SIZE
N_ACTIONS = 4
LEFT, DOWN, RIGHT, UP = range(N_ACTIONS)
START, GOAL = 0, N_TILES - 1
N_HOLES = 4
SHORTEST_PATH = 6

STEP_REWARD = -0.01
GOAL_REWARD = 1.0
HOLE_REWARD = -0.2
MAX_RETURN = GOAL_REWARD + (SHORTEST_PATH - 1) * STEP_REWARD

_MOVES = {LEFT: (0, -1), DOWN: (1, 0), RIGHT: (0, 1), UP: (-1, 0)}


def move(tile: int, action: int) -> int:
    """Grid move; bumping into the border leaves the agent in place."""
    r, c = divmod(tile, SIZE)
    dr, dc = _MOVES[action]
    nr, nc = r + dr, c + dc
    if 0 <= nr < SIZE and 0 <= nc < SIZE:
        return nr * SIZE + nc
    return tile


class EpisodeFinished(RuntimeError):
    pass


class LakeEnv:
    def __init__(self, holes, layout_seed: int | None = None, max_steps: int = 100):
        self.holes = frozenset(int(h) for h in holes)
        if START in self.holes or GOAL in self.holes:
            raise ValueError("start and goal cannot be holes")
        self.layout_seed = layout_seed
        self.max_steps = max_steps
        self.reset()

    @property
    def grid(self) -> list[str]:
        tiles = []
        for i in range(N_TILES):
            tiles.append("S" if i == START else "G" if i == GOAL else "H" if i in self.holes else "F")
        return ["".join(tiles[r * SIZE : (r + 1) * SIZE]) for r in range(SIZE)]

    def reset(self) -> int:
        self.agent_pos = START
        self.done = False
        self.steps = 0
        return self.agent_pos

    def transition(self, tile: int, action: int) -> tuple[int, float, bool]:
        """Model of one move from ``tile``; terminal rewards replace the step cost."""
        nxt = move(tile, action)
        if nxt == GOAL:
            return nxt, GOAL_REWARD, True
        if nxt in self.holes:
            return nxt, HOLE_REWARD, True
        return nxt, STEP_REWARD, False

    def step(self, action: int) -> tuple[int, float, bool]:
        if self.done:
            raise EpisodeFinished("step() called on a finished episode; call reset()")
        nxt, reward, terminal = self.transition(self.agent_pos, int(action))
        self.agent_pos = nxt
        self.steps += 1
        self.done = terminal or self.steps >= self.max_steps
        return nxt, reward, self.done

    def __repr__(self) -> str:
        return f"LakeEnv({'/'.join(self.grid)})"


def shortest_path(holes) -> int | None:
    """BFS moves from start to goal over non-hole tiles (None if unreachable)."""
    holes = set(holes)
    dist = {START: 0}
    queue = collections.deque([START])
    while queue:
        tile = queue.popleft()
        if tile == GOAL:
            return dist[tile]
        for a in range(N_ACTIONS):
            nxt = move(tile, a)
            if nxt not in dist and nxt not in holes:
                dist[nxt] = dist[tile] + 1
                queue.append(nxt)
    return None


def generate_lake(seed: int, max_steps: int = 100) -> LakeEnv:
    """Rejection-sample 4 holes among the 14 inner tiles until a 6-move path exists."""
    rng = np.random.default_rng([int(seed), 3])
    candidates = np.arange(1, N_TILES - 1)
    while True:
        holes = rng.choice(candidates, size=N_HOLES, replace=False)
        if shortest_path(holes) == SHORTEST_PATH:
            return LakeEnv(sorted(holes.tolist()), layout_seed=int(seed), max_steps=max_steps)


def env_step(env: LakeEnv, action: int) -> tuple[int, float, bool]:
    return env.step(action)


def encode_state(tile: int) -> np.ndarray:
    """Big-endian 4-bit encoding of the tile index."""
    if not 0 <= tile < N_TILES:
        raise ValueError(f"tile {tile} out of range")
    return np.array([(tile >> (3 - b)) & 1 for b in range(4)], dtype=float)


_ENCODED = np.stack([encode_state(t) for t in range(N_TILES)])


def optimal_return(env: LakeEnv, horizon: int | None = None) -> float:
    """Finite-horizon undiscounted value iteration from the start tile."""
    horizon = env.max_steps if horizon is None else horizon
    value = np.zeros(N_TILES)
    for _ in range(horizon):
        new = np.empty(N_TILES)
        for s in range(N_TILES):
            best = -math.inf
            for a in range(N_ACTIONS):
                nxt, r, terminal = env.transition(s, a)
                best = max(best, r + (0.0 if terminal else value[nxt]))
            new[s] = best
        value = new
    return float(value[START])


def moving_average(rewards, window: int = 50) -> np.ndarray:
    """Mean over up to the last ``window`` entries, including the current one."""
    r = np.asarray(rewards, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(r)])
    idx = np.arange(len(r))
    lo = np.maximum(0, idx - window + 1)
    return (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)


# -- replay --------------------------------------------------------------------------


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first."""

    def __init__(self, capacity: int = 1000, state_dim: int = 4):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def push(self, t: Transition) -> None:
        i = self.inserted % self.capacity
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.dones[i] = float(t.done)
        self.inserted += 1

    def sample(self, batch_size: int, rng):
        if len(self) < batch_size:
            raise ValueError(f"cannot sample {batch_size} from {len(self)} transitions")
        idx = rng.choice(len(self), size=batch_size, replace=False)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx]


# -- DQN -----------------------------------------------------------------------------


@dataclass
class DqnConfig:
    episodes: int = 500
    max_steps: int = 100
    gamma: float = 0.95
    learning_rate: float = 0.01
    batch_size: int = 16
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.99
    epsilon_min: float = 0.01
    target_update_every: int = 20
    replay_capacity: int = 1000
    test_episodes: int = 50

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name not in ("gamma", "epsilon_min") and value <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 < self.epsilon_min <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 < epsilon_min <= epsilon_start <= 1")


def epsilon_after(episodes: int, config: DqnConfig | None = None) -> float:
    config = config or DqnConfig()
    return max(config.epsilon_min, config.epsilon_start * config.epsilon_decay**episodes)


@dataclass
class RlMetrics:
    task: str
    model_id: str
    description: str
    seed: int
    n_params: int
    layout: list[str] = field(default_factory=list)
    episodes: list[dict] = field(default_factory=list)
    test_reward: float = float("nan")
    train_seconds: float = 0.0
    circuit_seconds: float = 0.0
    circuit_count: int = 0
    global_steps: int = 0

    @property
    def rewards(self) -> np.ndarray:
        return np.array([e["reward"] for e in self.episodes])

    @property
    def final_moving_average(self) -> float:
        r = self.rewards
        return float(moving_average(r)[-1]) if len(r) else float("nan")

    @property
    def final100_mean(self) -> float:
        r = self.rewards
        return float(np.mean(r[-100:])) if len(r) else float("nan")

    @property
    def per_circuit_seconds(self) -> float:
        return self.circuit_seconds / self.circuit_count if self.circuit_count else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(
            kind="rl",
            final_moving_average=self.final_moving_average,
            final100_mean=self.final100_mean,
            per_circuit_seconds=self.per_circuit_seconds,
        )
        return d


@dataclass
class RlResult:
    metrics: RlMetrics
    model: object
    env: LakeEnv


def greedy_action(model, tile: int) -> int:
    q = model.forward(_ENCODED[tile], RAW).values[0]
    return int(np.argmax(q))


def dqn_train(model_or_spec, config: DqnConfig | None = None, seed: int = 0, env: LakeEnv | None = None,
              recorder=None, on_step=None) -> RlResult:
    """Deep Q-learning with replay and a periodically synchronised target copy.

    ``on_step(global_step, policy, target)`` is called after every
    environment step (used by tests to watch the target network).
    """
    config = config or DqnConfig()
    policy = model_or_spec.build(seed) if isinstance(model_or_spec, ModelSpec) else model_or_spec
    env = env or generate_lake(seed, config.max_steps)
    target = policy.clone()
    quantum = hasattr(policy, "circuit_seconds")
    if quantum:
        policy.circuit_seconds, policy.circuit_count = 0.0, 0
        target.circuit_seconds, target.circuit_count = 0.0, 0
        policy.recorder = target.recorder = recorder
    metrics = RlMetrics("frozenlake", policy.model_id, policy.describe(), int(seed), policy.n_params, env.grid)
    opt = Adam(policy.n_params, config.learning_rate)
    buffer = ReplayBuffer(config.replay_capacity, 4)
    rng = np.random.default_rng([int(seed), 4])
    epsilon = config.epsilon_start
    step_count = 0
    train_seconds = 0.0
    rows = np.arange(config.batch_size)

    for episode in range(1, config.episodes + 1):
        if recorder is not None:
            recorder.set_point(episode)
        start = time.perf_counter()
        tile = env.reset()
        total = 0.0
        done = False
        while not done:
            if rng.random() < epsilon:
                action = int(rng.integers(N_ACTIONS))
            else:
                action = greedy_action(policy, tile)
            nxt, reward, done = env.step(action)
            # Truncation at max_steps still bootstraps; only goal/hole tiles end the return.
            terminal = nxt == GOAL or nxt in env.holes
            buffer.push(Transition(_ENCODED[tile], action, reward, _ENCODED[nxt], terminal))
            total += reward
            tile = nxt
            if len(buffer) >= config.batch_size:
                s, a, r, s2, d = buffer.sample(config.batch_size, rng)
                out = policy.forward(s, RAW)
                q_next = target.forward(s2, RAW).values
                y = r + config.gamma * q_next.max(axis=1) * (1.0 - d)
                grad = np.zeros_like(out.values)
                grad[rows, a] = 2.0 * (out.values[rows, a] - y) / config.batch_size
                opt.step(policy, policy.backward(out, grad))
            step_count += 1
            if step_count % config.target_update_every == 0:
                target.set_flat(policy.get_flat())
            if on_step is not None:
                on_step(step_count, policy, target)
        epsilon = max(config.epsilon_min, epsilon * config.epsilon_decay)
        train_seconds += time.perf_counter() - start
        if recorder is not None:
            train_seconds -= recorder.take_overhead()
        metrics.episodes.append(
            {"episode": episode, "reward": total, "steps": env.steps, "epsilon": epsilon,
             "train_seconds": train_seconds}
        )

    if recorder is not None:
        recorder.set_point(None)
    if quantum:
        metrics.circuit_seconds = policy.circuit_seconds + target.circuit_seconds
        metrics.circuit_count = policy.circuit_count + target.circuit_count
        policy.recorder = None
    metrics.train_seconds = train_seconds
    metrics.global_steps = step_count
    metrics.test_reward = evaluate_policy(policy, env, config.test_episodes)
    return RlResult(metrics, policy, env)


def rollout(model, env: LakeEnv) -> float:
    tile = env.reset()
    total, done = 0.0, False
    while not done:
        tile, reward, done = env.step(greedy_action(model, tile))
        total += reward
    return total


def evaluate_policy(model, env: LakeEnv, n_episodes: int = 50) -> float:
    """Mean return of greedy rollouts (no exploration)."""
    return float(np.mean([rollout(model, env) for _ in range(n_episodes)]))
