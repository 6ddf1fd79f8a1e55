"""DQN monitoring agent: epsilon-greedy acting, replay memory, Bellman-target fitting."""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from . import neural
from .errors import ConfigError, DimensionMismatch, InsufficientMemory, InvalidAction, NonFiniteValue
from .neural import AdamState, DenseLayer


@dataclass
class AgentConfig:
    gamma: float = 0.95
    epsilon: float = 1.0
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.995
    batch_size: int = 32
    learning_rate: float = 0.003
    hidden: tuple[int, ...] = (24,)
    memory_capacity: int = 2000
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.epsilon_min <= self.epsilon <= 1.0:
            raise ConfigError("need 0 <= epsilon_min <= epsilon <= 1")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ConfigError(f"epsilon_decay must be in (0, 1], got {self.epsilon_decay}")
        if self.batch_size < 1 or self.memory_capacity < self.batch_size:
            raise ConfigError("need 1 <= batch_size <= memory_capacity")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden sizes must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class QNetwork:
    """Dense relu stack with one linear output node per action."""

    layers: list[DenseLayer]
    optimizer: AdamState = field(default_factory=AdamState)

    @classmethod
    def init(cls, state_dim: int, n_actions: int, hidden=(24,), rng=None, lr: float = 1e-3) -> "QNetwork":
        rng = rng if rng is not None else np.random.default_rng()
        sizes = [state_dim, *hidden]
        layers = [DenseLayer.init(a, b, "relu", rng) for a, b in zip(sizes, sizes[1:])]
        layers.append(DenseLayer.init(sizes[-1], n_actions, "identity", rng))
        return cls(layers, AdamState(lr=lr))

    @property
    def state_dim(self) -> int:
        return self.layers[0].n_in

    @property
    def n_actions(self) -> int:
        return self.layers[-1].n_out

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(l.n_out for l in self.layers[:-1])

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(neural.prefixed(f"l{i}", layer.params()))
        return out

    def forward(self, states):
        x = np.asarray(states, dtype=np.float64)
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def predict(self, states) -> np.ndarray:
        return self.forward(states)[0]

    def backward(self, caches, d_out):
        grads = {}
        d = d_out
        for i in range(len(self.layers) - 1, -1, -1):
            d, g = self.layers[i].backward(caches[i], d)
            grads.update(neural.prefixed(f"l{i}", g))
        return grads

    def loss_and_grads(self, states, targets):
        q, caches = self.forward(states)
        loss = neural.mse_loss(q, targets)
        return loss, self.backward(caches, neural.mse_grad(q, targets))

    def fit(self, states, targets) -> float:
        loss, grads = self.loss_and_grads(states, targets)
        neural.adam_step(self.optimizer, self.params(), grads)
        return loss

    def copy(self) -> "QNetwork":
        layers = [DenseLayer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers]
        opt = AdamState(**self.optimizer.hyper(), step=self.optimizer.step,
                        m={k: v.copy() for k, v in self.optimizer.m.items()},
                        v={k: v.copy() for k, v in self.optimizer.v.items()})
        return QNetwork(layers, opt)


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool = False


class ReplayMemory:
    """Bounded FIFO of transitions; the oldest is evicted first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._buf: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._buf)

    def __getitem__(self, i) -> Transition:
        return self._buf[i]

    def __iter__(self):
        return iter(self._buf)

    def append(self, tr: Transition) -> None:
        self._buf.append(tr)

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        if n > len(self._buf):
            raise InsufficientMemory(f"memory holds {len(self._buf)} transitions, batch needs {n}")
        idx = rng.choice(len(self._buf), size=n, replace=False)
        return [self._buf[i] for i in idx]


def decay_schedule(eps0: float, decay: float, n: int, eps_min: float) -> float:
    return max(eps_min, eps0 * decay ** n)


class DQNAgent:
    def __init__(self, state_dim: int, n_actions: int, config: AgentConfig | None = None,
                 network: QNetwork | None = None, rng: np.random.Generator | None = None):
        self.config = config or AgentConfig()
        self.rng = rng if rng is not None else np.random.default_rng(self.config.seed)
        if network is None:
            network = QNetwork.init(state_dim, n_actions, self.config.hidden, self.rng, self.config.learning_rate)
        elif network.state_dim != state_dim or network.n_actions != n_actions:
            raise DimensionMismatch("network shape does not match state_dim/n_actions")
        self.model = network
        self.memory = ReplayMemory(self.config.memory_capacity)
        self.epsilon_start = self.config.epsilon
        self.n_decays = 0
        self.n_replays = 0

    @property
    def n_actions(self) -> int:
        return self.model.n_actions

    @property
    def epsilon(self) -> float:
        # closed form so the schedule is exact rather than an accumulated product
        return decay_schedule(self.epsilon_start, self.config.epsilon_decay, self.n_decays,
                              self.config.epsilon_min)

    def restart_exploration(self, epsilon: float | None = None) -> None:
        self.epsilon_start = self.config.epsilon if epsilon is None else epsilon
        self.n_decays = 0

    def q_values(self, state) -> np.ndarray:
        return self.model.predict(np.asarray(state, dtype=np.float64)[None])[0]

    def greedy(self, state) -> int:
        # np.argmax returns the lowest index on ties
        return int(np.argmax(self.q_values(state)))

    def act(self, state) -> int:
        if self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        return self.greedy(state)

    def memorize(self, state, action=None, reward=None, next_state=None, done=False) -> None:
        tr = state if isinstance(state, Transition) else Transition(
            np.asarray(state, dtype=np.float64), action, reward, np.asarray(next_state, dtype=np.float64), bool(done))
        if isinstance(tr.action, (bool, np.bool_)) or not isinstance(tr.action, (int, np.integer)) \
                or not 0 <= tr.action < self.n_actions:
            raise InvalidAction(f"action {tr.action!r} not in 0..{self.n_actions - 1}")
        if not np.isfinite(tr.reward):
            raise NonFiniteValue("transition reward must be finite")
        self.memory.append(Transition(tr.state, int(tr.action), float(tr.reward), tr.next_state, bool(tr.done)))

    def compute_targets(self, batch: list[Transition]):
        """Return (states, target matrix) for a sampled batch.

        Each target row is the current Q(s) with the taken action's entry
        replaced by r, or r + gamma * max_a Q(s', a) when not terminal.
        """
        states = np.stack([t.state for t in batch])
        next_states = np.stack([t.next_state for t in batch])
        actions = np.array([t.action for t in batch])
        rewards = np.array([t.reward for t in batch], dtype=np.float64)
        done = np.array([t.done for t in batch])
        targets = self.model.predict(states)
        q_next = self.model.predict(next_states)
        boot = np.where(done, rewards, rewards + self.config.gamma * q_next.max(axis=1))
        targets[np.arange(len(batch)), actions] = boot
        return states, targets

    def replay(self, batch_size: int | None = None) -> float:
        n = batch_size or self.config.batch_size
        batch = self.memory.sample(n, self.rng)
        states, targets = self.compute_targets(batch)
        loss = self.model.fit(states, targets)
        self.n_replays += 1
        self.n_decays += 1
        return loss


def tabular_q_update(Q: np.ndarray, s: int, a: int, r: float, s_next: int, alpha: float, gamma: float) -> np.ndarray:
    """Return a copy of Q with the one-step Q-learning update applied to (s, a)."""
    Q = np.array(Q, dtype=np.float64, copy=True)
    Q[s, a] = (1.0 - alpha) * Q[s, a] + alpha * (r + gamma * np.max(Q[s_next]))
    return Q
