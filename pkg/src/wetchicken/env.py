"""The Wet-Chicken river benchmark.

A canoeist paddles on a 5 x 5 stretch of river that ends in a waterfall at
``x = 5``. The water flows faster near the ``y = 0`` bank and carries more
turbulence near the opposite bank. Reward equals the position along the
flow, so a good policy balances close to the edge without going over;
falling (or drifting back past the start line) resets the canoe to the
origin. Transitions for a state ``(x, y)`` and action ``(a_x, a_y)`` with
turbulence draw ``tau ~ U(-1, 1)``:

    v    = 3 y / w                 (stream velocity)
    b    = 3.5 - v                 (turbulence magnitude)
    x_h  = x + (1.5 a_x - 0.5) + v + b tau
    y_h  = y + a_y

``x_h > l`` resets both coordinates to 0, ``x_h < 0`` clamps only ``x``,
and ``y_h`` is clamped into ``[0, w]``. The comparisons are strict:
landing exactly on the waterfall edge is safe.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import ContractViolation

LENGTH = accel.RIVER_LENGTH
WIDTH = accel.RIVER_WIDTH

_DATASET_HEADER = ["x", "y", "ax", "ay", "xn", "yn"]


def _check_states(states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.shape[-1] != 2:
        raise ContractViolation(f"states must have last dim 2, got {states.shape}")
    if np.any(states[..., 0] < 0) or np.any(states[..., 0] > LENGTH) or \
            np.any(states[..., 1] < 0) or np.any(states[..., 1] > WIDTH):
        raise ContractViolation("states must lie in [0, 5] x [0, 5]")
    return states


def _check_actions(actions: np.ndarray) -> np.ndarray:
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape[-1] != 2:
        raise ContractViolation(f"actions must have last dim 2, got {actions.shape}")
    if np.any(np.abs(actions) > 1.0):
        raise ContractViolation("actions must lie in [-1, 1]^2")
    return actions


def step(states: np.ndarray, actions: np.ndarray,
         tau: np.ndarray) -> np.ndarray:
    """Deterministic transition given the turbulence draws ``tau``.

    All arguments broadcast over a leading batch dimension; ``tau`` holds
    one draw in ``[-1, 1]`` per row.
    """
    states = _check_states(states)
    actions = _check_actions(actions)
    tau = np.asarray(tau, dtype=np.float64)
    squeeze = states.ndim == 1
    states = np.atleast_2d(states)
    actions = np.atleast_2d(actions)
    tau = np.atleast_1d(tau)
    if np.any(np.abs(tau) > 1.0):
        raise ContractViolation("turbulence draws must lie in [-1, 1]")
    xn, yn = accel.chicken_step(
        np.ascontiguousarray(states[:, 0]), np.ascontiguousarray(states[:, 1]),
        np.ascontiguousarray(actions[:, 0]), np.ascontiguousarray(actions[:, 1]),
        np.ascontiguousarray(tau))
    out = np.stack([xn, yn], axis=-1)
    return out[0] if squeeze else out


def step_random(states: np.ndarray, actions: np.ndarray,
                rng: np.random.Generator) -> np.ndarray:
    """Convenience wrapper: draws one turbulence value per row."""
    states = np.asarray(states, dtype=np.float64)
    n = 1 if states.ndim == 1 else states.shape[0]
    tau = rng.uniform(-1.0, 1.0, size=n)
    return step(states, actions, tau[0] if states.ndim == 1 else tau)


def reward(states: np.ndarray) -> np.ndarray:
    """Reward is the position along the flow direction."""
    states = np.asarray(states, dtype=np.float64)
    return states[..., 0]


def fall_probability(states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Probability that the next ``x`` resets to 0 under ``tau ~ U(-1, 1)``.

    Covers both reset events: being swept over the waterfall (``x_h > l``)
    and being pushed back past the start line (``x_h < 0``). With
    ``c = x + 1.5 a_x - 0.5 + v`` and ``x_h = c + b tau``,

        P(x_h > l) = clip((1 - (l - c)/b) / 2, 0, 1)
        P(x_h < 0) = clip((1 - c/b) / 2, 0, 1)

    and the events are disjoint because ``b = 3.5 - v >= 0.5 > 0``.
    """
    states = _check_states(states)
    actions = _check_actions(actions)
    v = 3.0 * states[..., 1] / WIDTH
    b = 3.5 - v
    c = states[..., 0] + 1.5 * actions[..., 0] - 0.5 + v
    p_over = np.clip((1.0 - (LENGTH - c) / b) / 2.0, 0.0, 1.0)
    p_under = np.clip((1.0 - c / b) / 2.0, 0.0, 1.0)
    return p_over + p_under


def sample_uniform_states(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform([0.0, 0.0], [LENGTH, WIDTH], size=(n, 2))


@dataclass
class TransitionDataset:
    """A batch of one-step transitions collected under random exploration."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.next_states = np.asarray(self.next_states, dtype=np.float64)
        n = len(self.states)
        if self.actions.shape != (n, 2) or self.next_states.shape != (n, 2) \
                or self.states.shape != (n, 2):
            raise ContractViolation("dataset arrays must all be (n, 2)")

    def __len__(self) -> int:
        return len(self.states)

    def subset(self, indices) -> "TransitionDataset":
        return TransitionDataset(self.states[indices], self.actions[indices],
                                 self.next_states[indices])

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_DATASET_HEADER)
            for s, a, ns in zip(self.states, self.actions, self.next_states):
                writer.writerow([repr(float(v))
                                 for v in (s[0], s[1], a[0], a[1], ns[0], ns[1])])

    @classmethod
    def load_csv(cls, path) -> "TransitionDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != _DATASET_HEADER:
                raise ContractViolation(
                    f"unexpected dataset header {header!r}")
            parsed = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 6:
                    raise ContractViolation(
                        f"line {lineno}: expected 6 fields, got {len(row)}")
                try:
                    parsed.append([float(v) for v in row])
                except ValueError as exc:
                    raise ContractViolation(
                        f"line {lineno}: {exc}") from exc
        if not parsed:
            raise ContractViolation("dataset file holds no rows")
        rows = np.array(parsed)
        return cls(rows[:, 0:2], rows[:, 2:4], rows[:, 4:6])


def sample_dataset(n: int, rng: np.random.Generator) -> TransitionDataset:
    """Uniform-exploration batch: states ~ U([0,5]^2), actions ~ U([-1,1]^2)."""
    if n <= 0:
        raise ContractViolation("dataset size must be positive")
    states = sample_uniform_states(n, rng)
    actions = rng.uniform(-1.0, 1.0, size=(n, 2))
    tau = rng.uniform(-1.0, 1.0, size=n)
    return TransitionDataset(states, actions, step(states, actions, tau))


@dataclass
class EvalReport:
    """Monte-Carlo estimate of a policy's performance on the true river."""

    avg_step_reward: float
    avg_step_reward_stderr: float
    discounted_return: float
    discounted_return_stderr: float
    n_rollouts: int
    horizon: int

    @staticmethod
    def _stderr(per_rollout: np.ndarray) -> float:
        if per_rollout.size < 2:
            return 0.0
        return float(np.std(per_rollout, ddof=1) / np.sqrt(per_rollout.size))


def evaluate_policy_true(policy, horizon: int = 100, n_rollouts: int = 1000,
                         gamma: float = 0.9, *,
                         rng: np.random.Generator) -> EvalReport:
    """Roll a policy out on the true dynamics from uniform starts.

    ``policy`` maps a batch of states ``(n, 2)`` to actions ``(n, 2)``. The
    average step reward is the mean of ``r(s_t)`` over ``t = 1..horizon``
    (the start state is given, not earned); the discounted return also
    counts ``t = 0`` with weight 1.
    """
    if n_rollouts <= 0 or horizon <= 0:
        raise ContractViolation("n_rollouts and horizon must be positive")
    states = sample_uniform_states(n_rollouts, rng)
    step_sum = np.zeros(n_rollouts)
    discounted = reward(states).copy()
    for t in range(1, horizon + 1):
        actions = _check_actions(policy(states))
        states = step_random(states, actions, rng)
        r = reward(states)
        step_sum += r
        discounted += gamma**t * r
    per_step = step_sum / horizon
    return EvalReport(
        avg_step_reward=float(per_step.mean()),
        avg_step_reward_stderr=EvalReport._stderr(per_step),
        discounted_return=float(discounted.mean()),
        discounted_return_stderr=EvalReport._stderr(discounted),
        n_rollouts=n_rollouts,
        horizon=horizon,
    )
