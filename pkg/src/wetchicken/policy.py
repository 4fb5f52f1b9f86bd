"""Neural policy trained by Monte-Carlo gradients through a learned model.

The policy is a state-feedback network mapping ``(x, y)`` to a paddling
action in ``[-1, 1]^2`` (two hidden layers of 20 rectified-linear units,
tanh output). Its objective is the discounted return of length-``T``
rollouts through a frozen transition model, estimated from ``P`` parallel
particles with pathwise (reparameterized) sampling so the gradient flows
through the model's predictive equations. The categorical mode choice
inside a mixture model stays a plain draw during sampling; models that
expose scored sampling additionally contribute a score-function term
during training (log-probability of each drawn mode weighted by the
detached return that followed it), which restores the gradient of the
mode probabilities that pathwise differentiation alone cannot see and
keeps the combined estimate unbiased.

Model states are never clipped during propagation, but the reward applied
to them is ``clip(x, 0, 5)`` so a single runaway sample cannot dominate
the objective.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .autodiff import Tensor
from .errors import ContractViolation, NumericalError
from .nets import Mlp

LOGGER = logging.getLogger(__name__)


class PolicyNet:
    """State-feedback controller; see the module docstring.

    Inputs are internally rescaled from the river box ``[0,5]^2`` to
    ``[-1,1]^2`` before the network proper.
    """

    LAYERS = (2, 20, 20, 2)

    def __init__(self, rng: np.random.Generator | None = None):
        self.net = Mlp(self.LAYERS, "relu", "tanh", rng)

    def params(self) -> list[Tensor]:
        return self.net.params()

    def forward(self, states: Tensor) -> Tensor:
        scaled = states * Tensor(np.array([0.4, 0.4])) - Tensor(
            np.array([1.0, 1.0]))
        return self.net.forward(scaled)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.net.to_checkpoint(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "PolicyNet":
        with open(path) as fh:
            doc = json.load(fh)
        policy = cls()
        policy.net = Mlp.from_checkpoint(doc, "relu", "tanh")
        if policy.net.layer_sizes != list(cls.LAYERS):
            raise ContractViolation(
                f"policy checkpoint has layers {policy.net.layer_sizes}, "
                f"expected {list(cls.LAYERS)}")
        return policy


def act(policy: PolicyNet, state: np.ndarray) -> np.ndarray:
    """Deterministic bounded action for one state or a batch of states."""
    state = np.asarray(state, dtype=np.float64)
    out = policy.forward(Tensor(np.atleast_2d(state))).data
    return out[0] if state.ndim == 1 else out


@dataclass
class RolloutConfig:
    """Model-rollout protocol: T steps, P particles, discount, and the
    pool of states that rollouts start from (drawn uniformly per particle).
    """

    initial_states: np.ndarray
    horizon: int = 5
    samples: int = 20
    gamma: float = 0.9
    seed: int = 0

    def __post_init__(self):
        self.initial_states = np.atleast_2d(
            np.asarray(self.initial_states, dtype=np.float64))
        if self.initial_states.ndim != 2 or \
                self.initial_states.shape[1] != 2 or \
                len(self.initial_states) < 1:
            raise ContractViolation("initial_states must be a (n, 2) pool")
        if self.horizon < 1 or self.samples < 1 or \
                not 0.0 <= self.gamma <= 1.0:
            raise ContractViolation(
                "need horizon >= 1, samples >= 1, 0 <= gamma <= 1")


class ReturnEstimate(NamedTuple):
    value: float
    per_sample: np.ndarray


def _as_sampler(model):
    """Accept a trainable model, a frozen snapshot, or any object that
    already offers the ``draw_eps`` / ``sample_next`` rollout interface."""
    if hasattr(model, "sample_next"):
        return model
    if hasattr(model, "freeze"):
        return model.freeze()
    raise ContractViolation(
        "model must provide sample_next/draw_eps or freeze()")


def rollout_returns(policy: PolicyNet, sampler, init_states: np.ndarray,
                    horizon: int, gamma: float, eps_list: list) -> Tensor:
    """Per-particle discounted returns as one differentiable tensor.

    The particles advance in lockstep: one policy evaluation and one
    batched model draw per step, using the pre-drawn eps bundle for that
    step. Reward at every step (including the start states) is
    ``clip(x, 0, 5)``.
    """
    states = Tensor(np.atleast_2d(init_states))
    total = states[:, 0].clip(0.0, 5.0)
    disc = 1.0
    for t in range(horizon):
        actions = policy.forward(states)
        states = sampler.sample_next(states, actions, eps_list[t])
        disc *= gamma
        total = total + states[:, 0].clip(0.0, 5.0) * disc
    return total


def _rollout_scored(policy: PolicyNet, sampler, init_states: np.ndarray,
                    horizon: int, gamma: float, eps_list: list):
    """Rollout that also collects per-step mode log-probabilities.

    Returns the per-particle return tensor, the detached per-step
    discounted rewards (horizon + 1 arrays, start states included), and
    one log-probability tensor per model draw.
    """
    states = Tensor(np.atleast_2d(init_states))
    reward = states[:, 0].clip(0.0, 5.0)
    total = reward
    step_rewards = [reward.data.copy()]
    logps = []
    disc = 1.0
    for t in range(horizon):
        actions = policy.forward(states)
        states, logp = sampler.sample_next_scored(states, actions,
                                                  eps_list[t])
        logps.append(logp)
        disc *= gamma
        reward = states[:, 0].clip(0.0, 5.0) * disc
        total = total + reward
        step_rewards.append(reward.data.copy())
    return total, step_rewards, logps


def _score_surrogate(total: Tensor, step_rewards: list,
                     logps: list) -> Tensor:
    """Pathwise mean plus the score-function term for the mode draws.

    Each draw's log-probability is weighted by the detached discounted
    return that followed it, centered across particles as a baseline.
    Differentiating this surrogate yields the pathwise gradient plus the
    mode-probability gradient the pathwise part drops; the baseline only
    reduces variance, it does not shift the expectation.
    """
    surrogate = total.mean()
    suffix = np.zeros_like(step_rewards[0])
    for t in range(len(logps) - 1, -1, -1):
        suffix = suffix + step_rewards[t + 1]
        coeff = suffix - suffix.mean()
        surrogate = surrogate + (Tensor(coeff) * logps[t]).mean()
    return surrogate


def estimate_return(policy: PolicyNet, model, cfg: RolloutConfig,
                    rng: np.random.Generator, *,
                    eps_list: list | None = None) -> ReturnEstimate:
    """Monte-Carlo discounted return of ``policy`` under ``model``.

    Start states are drawn uniformly from ``cfg.initial_states``; the
    model noise comes from ``rng`` unless a frozen ``eps_list`` (one
    bundle per step) is supplied, in which case the estimate is a
    deterministic function of the given draws.
    """
    sampler = _as_sampler(model)
    idx = rng.choice(len(cfg.initial_states), size=cfg.samples, replace=True)
    init = cfg.initial_states[idx]
    if eps_list is None:
        eps_list = [sampler.draw_eps(cfg.samples, rng)
                    for _ in range(cfg.horizon)]
    total = rollout_returns(policy, sampler, init, cfg.horizon, cfg.gamma,
                            eps_list)
    return ReturnEstimate(float(total.data.mean()), total.data.copy())


class PolicyTrainResult(NamedTuple):
    policy: PolicyNet
    curve: np.ndarray


def train_policy(model, cfg: RolloutConfig, steps: int = 2000,
                 lr: float = 1e-2, rng: np.random.Generator | None = None
                 ) -> PolicyTrainResult:
    """Stochastic-gradient ascent on the estimated return.

    Every step draws fresh start states and eps bundles (common random
    numbers within the step), backpropagates through the rollout, and
    takes one adaptive-moment step. When the model offers scored
    sampling, the objective gains the score-function term for the mode
    draws (see ``_score_surrogate``); the recorded curve is always the
    plain return estimate. A non-finite objective or gradient skips the
    step with a logged diagnostic; three consecutive skips abort with
    ``NumericalError``. Returns the final policy and the per-step
    return curve.
    """
    from .optim import Adam

    if steps < 1 or lr <= 0:
        raise ContractViolation("steps must be >= 1 and lr positive")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    sampler = _as_sampler(model)
    scored = hasattr(sampler, "sample_next_scored")
    policy = PolicyNet(rng)
    opt = Adam(policy.params(), lr=lr)
    curve = np.empty(steps)
    consecutive_bad = 0
    for step in range(steps):
        idx = rng.choice(len(cfg.initial_states), size=cfg.samples,
                         replace=True)
        eps_list = [sampler.draw_eps(cfg.samples, rng)
                    for _ in range(cfg.horizon)]
        if scored:
            total, step_rewards, logps = _rollout_scored(
                policy, sampler, cfg.initial_states[idx], cfg.horizon,
                cfg.gamma, eps_list)
            objective = _score_surrogate(total, step_rewards, logps)
        else:
            total = rollout_returns(policy, sampler,
                                    cfg.initial_states[idx], cfg.horizon,
                                    cfg.gamma, eps_list)
            objective = total.mean()
        curve[step] = float(total.data.mean())
        opt.zero_grad()
        bad = not np.isfinite(curve[step])
        if not bad:
            (-objective).backward()
            bad = any(p.grad is not None and not np.all(np.isfinite(p.grad))
                      for p in policy.params())
        if bad:
            consecutive_bad += 1
            LOGGER.warning("policy step %d: non-finite objective or "
                           "gradient, skipping (%d consecutive)",
                           step, consecutive_bad)
            if consecutive_bad >= 3:
                raise NumericalError(
                    "policy training aborted: three consecutive non-finite "
                    f"gradient estimates at step {step}")
            continue
        consecutive_bad = 0
        opt.step()
    return PolicyTrainResult(policy, curve)


def policy_grid(policy: PolicyNet, resolution: int = 25) -> np.ndarray:
    """Action field on grid cell centers: rows of ``(x, y, ax, ay)``."""
    if resolution < 1:
        raise ContractViolation("resolution must be positive")
    edges = np.linspace(0.0, 5.0, resolution + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    gx, gy = np.meshgrid(centers, centers, indexing="ij")
    states = np.column_stack([gx.ravel(), gy.ravel()])
    return np.hstack([states, act(policy, states)])


def save_policy_grid_csv(rows: np.ndarray, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "ax", "ay"])
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
