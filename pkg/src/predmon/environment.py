"""Gym-style monitoring environment over a sequence of (predicted) observations.

The trajectory is exogenous: the cursor walks the sequence forward one step
per action, so the transition kernel is deterministic and independent of the
agent's choice. Only the reward depends on the action.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .errors import EmptySequence, EpisodeFinished, InvalidAction
from .policy import ThresholdTable, correct_actions


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool
    info: dict


@dataclass
class MonitorEnv:
    states: np.ndarray
    table: ThresholdTable
    episode_length: int | None = None
    reward: float = 1.0
    penalty: float = 1.0
    obs_shift: float = 0.0
    obs_scale: float = 1.0
    horizon_steps: np.ndarray | None = None  # appended as a feature when given
    horizon: int = 4
    log_steps: bool = False

    cursor: int = field(default=0, init=False)
    remaining: int = field(default=0, init=False)
    done: bool = field(default=True, init=False)
    episode: int = field(default=0, init=False)
    step_log: list = field(default_factory=list, init=False)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64).ravel()
        if self.reward <= 0 or self.penalty <= 0:
            raise ValueError("reward and penalty magnitudes must be positive")
        if self.obs_scale <= 0:
            raise ValueError("obs_scale must be positive")
        if self.episode_length is None:
            self.episode_length = max(len(self.states), 1)
        if self.episode_length < 1:
            raise ValueError("episode_length must be positive")
        # precomputed once; the table is immutable and so is the trajectory
        self._correct = correct_actions(self.table, self.states) if len(self.states) else np.empty(0, int)
        self.remaining = self.episode_length

    @property
    def n_actions(self) -> int:
        return self.table.n_actions

    @property
    def state_dim(self) -> int:
        return 1 if self.horizon_steps is None else 2

    def observation(self, i: int) -> np.ndarray:
        x = (self.states[i] - self.obs_shift) / self.obs_scale
        if self.horizon_steps is None:
            return np.array([x])
        return np.array([x, self.horizon_steps[i] / self.horizon])

    def correct_action_at(self, i: int) -> int:
        return int(self._correct[i])

    def reset(self) -> np.ndarray:
        if len(self.states) == 0:
            raise EmptySequence("environment has no states")
        self.cursor = 0
        self.remaining = self.episode_length
        self.done = False
        self.episode += 1
        return self.observation(0)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EpisodeFinished("call reset() before stepping again")
        if isinstance(action, (bool, np.bool_)) or not isinstance(action, (int, np.integer)) \
                or not 0 <= action < self.n_actions:
            raise InvalidAction(f"action {action!r} not in 0..{self.n_actions - 1}")
        action = int(action)
        t = self.cursor
        value = float(self.states[t])
        correct = self.correct_action_at(t)
        r = self.reward if action == correct else -self.penalty
        self.cursor += 1
        self.remaining -= 1
        self.done = self.remaining == 0 or self.cursor >= len(self.states)
        nxt = self.observation(min(self.cursor, len(self.states) - 1))
        info = {"t": t, "value": value, "correct_action": correct,
                "team": self.table.team(action), "severity": self.table.severity(action)}
        if self.log_steps:
            self.step_log.append({"episode": self.episode, "t": t, "state": value, "action": action,
                                  "correct_action": correct, "reward": r, "done": self.done})
        return StepResult(nxt, r, self.done, info)

    def episode_steps(self) -> int:
        return min(self.episode_length, len(self.states))

    def write_step_log(self, fh: IO[str], agent: str | None = None) -> None:
        for rec in self.step_log:
            if agent is not None:
                rec = {"agent": agent, **rec}
            fh.write(json.dumps(rec) + "\n")


def episode_max_reward(env: MonitorEnv) -> float:
    return env.reward * env.episode_steps()
