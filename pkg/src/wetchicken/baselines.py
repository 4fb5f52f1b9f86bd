"""The two comparison learners: a plain GP dynamics model and fitted Q.

The plain GP model is a single-mode, homoscedastic ablation of the
mixture model: one sparse variational GP per output dimension plus one
learned scalar observation-noise level per dimension. Its evidence lower
bound is analytic (Gaussian likelihood), and its frozen form exposes the
same ``draw_eps`` / ``sample_next`` rollout interface as the mixture, so
the policy module works with either model unchanged.

Neural fitted Q-iteration is the model-free baseline: a small Q-network
over (state, action) refit repeatedly to one-step bootstrap targets built
from the fixed batch, with greedy action selection over a finite grid.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .autodiff import Tensor, concat
from .dagp import Standardizer, TrainConfig
from .env import TransitionDataset, reward
from .errors import ContractViolation, NumericalError
from .gp import SparseGP
from .nets import Mlp
from .optim import Adam
from .seeding import STREAM_MODEL, seed_rng

LOGGER = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


# -- plain GP dynamics model ---------------------------------------------------


class PlainGpModel:
    """Homoscedastic single-mode GP transition model; see module docstring."""

    def __init__(self, standardizer: Standardizer, gps: list[SparseGP],
                 log_noise: Tensor):
        if len(gps) != 2 or log_noise.data.shape != (2,):
            raise ContractViolation("need one GP and one noise level per "
                                    "output dimension")
        self.standardizer = standardizer
        self.gps = gps
        self.log_noise = log_noise

    @classmethod
    def init_from_dataset(cls, dataset: TransitionDataset, n_inducing: int,
                          rng: np.random.Generator) -> "PlainGpModel":
        std = Standardizer.fit(dataset)
        xhat = std.encode_inputs(dataset.states, dataset.actions)
        m = min(n_inducing, len(dataset))
        gps = [SparseGP(xhat[rng.choice(len(dataset), size=m, replace=False)])
               for _ in range(2)]
        return cls(std, gps, Tensor(np.full(2, -1.0), requires_grad=True))

    def params(self) -> list[Tensor]:
        return [p for g in self.gps for p in g.params()] + [self.log_noise]

    def noise_sigma(self) -> np.ndarray:
        """Learned observation noise per output dimension, env units."""
        return np.exp(self.log_noise.data) * self.standardizer.out_scale

    def encode(self, dataset: TransitionDataset) -> tuple[np.ndarray,
                                                          np.ndarray]:
        return (self.standardizer.encode_inputs(dataset.states,
                                                dataset.actions),
                self.standardizer.encode_outputs(dataset.next_states))

    def elbo(self, xhat: np.ndarray, y_std: np.ndarray,
             total_n: int | None = None) -> Tensor:
        """Analytic Gaussian bound for one standardized batch.

        Per dimension: ``sum_t [log N(y_t | mu_t, sigma^2) - v_t /
        (2 sigma^2)]`` scaled by ``total_n / batch``, minus the KL of each
        GP to its prior.
        """
        batch = xhat.shape[0]
        total_n = batch if total_n is None else int(total_n)
        X = Tensor(xhat)
        bound = None
        for d in range(2):
            mean, var, kl = self.gps[d].posterior_terms(X)
            log_sig = self.log_noise[d]
            inv_2var = 0.5 * (-2.0 * log_sig).exp()
            resid = Tensor(y_std[:, d]) - mean
            fit = ((-0.5 * _LOG_2PI) - log_sig
                   - (resid * resid + var) * inv_2var).sum()
            term = fit * (float(total_n) / batch) - kl
            bound = term if bound is None else bound + term
        return bound

    def freeze(self) -> "FrozenPlainGp":
        return FrozenPlainGp(self)

    def to_checkpoint(self) -> dict:
        return {
            "standardizer": self.standardizer.to_dict(),
            "gps": [g.to_fragment() for g in self.gps],
            "log_noise": [float(v) for v in self.log_noise.data],
        }

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "PlainGpModel":
        try:
            std = Standardizer.from_dict(doc["standardizer"])
            gps = [SparseGP.from_fragment(f) for f in doc["gps"]]
            log_noise = np.array(doc["log_noise"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolation(f"malformed model checkpoint: {exc}") \
                from exc
        return cls(std, gps, Tensor(log_noise, requires_grad=True))


class FrozenPlainGp:
    """Read-only snapshot with the shared rollout-sampler interface."""

    def __init__(self, model: PlainGpModel):
        self.gps = [g.freeze() for g in model.gps]
        self.sigma = np.exp(model.log_noise.data)
        std = model.standardizer
        self.in_mean, self.in_scale = std.in_mean, std.in_scale
        self.out_mean, self.out_scale = std.out_mean, std.out_scale

    def draw_eps(self, n: int, rng: np.random.Generator) -> dict:
        return {
            "f": rng.standard_normal((n, 2)),
            "obs": rng.standard_normal((n, 2)),
        }

    def sample_next(self, states, actions, eps: dict) -> Tensor:
        from .autodiff import as_tensor, stack

        states, actions = as_tensor(states), as_tensor(actions)
        raw = concat([states, actions], axis=1)
        xhat = (raw - Tensor(self.in_mean)) * Tensor(1.0 / self.in_scale)
        dims = []
        for d in range(2):
            mean, var = self.gps[d].predict(xhat)
            f_s = mean + var.sqrt() * Tensor(eps["f"][:, d])
            dims.append(f_s + Tensor(self.sigma[d] * eps["obs"][:, d]))
        out_std = stack(dims, axis=1)
        return out_std * Tensor(self.out_scale) + Tensor(self.out_mean)


class GpTrainResult(NamedTuple):
    model: PlainGpModel
    curve: np.ndarray


def train_plain_gp(dataset: TransitionDataset,
                   config: TrainConfig) -> GpTrainResult:
    """Stochastic ascent of the analytic bound; minibatched like the
    mixture trainer (the mixture-only config fields are ignored)."""
    rng = seed_rng(config.seed, STREAM_MODEL)
    model = PlainGpModel.init_from_dataset(dataset, config.n_inducing, rng)
    xhat, y_std = model.encode(dataset)
    n = len(dataset)
    batch_size = min(config.minibatch, n)
    params = model.params()
    opt = Adam(params, lr=config.learning_rate)
    curve = np.full(config.iterations, np.nan)
    snapshot = [p.data.copy() for p in params]
    for it in range(config.iterations):
        idx = rng.choice(n, size=batch_size, replace=False)
        bound = model.elbo(xhat[idx], y_std[idx], total_n=n)
        value = bound.item()
        curve[it] = value
        if not np.isfinite(value):
            for p, saved in zip(params, snapshot):
                p.data = saved.copy()
            curve = curve[: it + 1]
            break
        opt.zero_grad()
        (-bound).backward()
        opt.step()
        if (it + 1) % 100 == 0:
            snapshot = [p.data.copy() for p in params]
    return GpTrainResult(model, curve)


# -- neural fitted Q-iteration ------------------------------------------------


def _default_actions() -> np.ndarray:
    vals = np.array([-1.0, 0.0, 1.0])
    gx, gy = np.meshgrid(vals, vals, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass
class ActionGrid:
    """Finite candidate-action set for the fitted-Q maximization."""

    actions: np.ndarray = field(default_factory=_default_actions)

    def __post_init__(self):
        self.actions = np.atleast_2d(
            np.asarray(self.actions, dtype=np.float64))
        if self.actions.shape[0] < 1 or self.actions.shape[1] != 2:
            raise ContractViolation("action grid must be a nonempty (A, 2)")
        if np.any(np.abs(self.actions) > 1.0):
            raise ContractViolation("grid actions must lie in [-1, 1]^2")

    def __len__(self) -> int:
        return len(self.actions)


class QNet:
    """State-action value network: one 10-unit sigmoid hidden layer.

    States are internally rescaled from ``[0,5]^2`` to ``[-1,1]^2``;
    actions pass through unscaled.
    """

    LAYERS = (4, 10, 1)
    _IN_SCALE = np.array([0.4, 0.4, 1.0, 1.0])
    _IN_SHIFT = np.array([1.0, 1.0, 0.0, 0.0])

    def __init__(self, rng: np.random.Generator | None = None):
        self.net = Mlp(self.LAYERS, "sigmoid", "linear", rng)

    def params(self) -> list[Tensor]:
        return self.net.params()

    def forward(self, states_actions: Tensor) -> Tensor:
        scaled = states_actions * Tensor(self._IN_SCALE) - Tensor(
            self._IN_SHIFT)
        return self.net.forward(scaled).reshape((-1,))

    def values(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        sa = np.hstack([np.atleast_2d(states), np.atleast_2d(actions)])
        return self.forward(Tensor(sa)).data

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.net.to_checkpoint(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "QNet":
        with open(path) as fh:
            doc = json.load(fh)
        q = cls()
        q.net = Mlp.from_checkpoint(doc, "sigmoid", "linear")
        if q.net.layer_sizes != list(cls.LAYERS):
            raise ContractViolation(
                f"Q checkpoint has layers {q.net.layer_sizes}, "
                f"expected {list(cls.LAYERS)}")
        return q


@dataclass
class NfqConfig:
    gamma: float = 0.9
    learning_rate: float = 1e-2
    max_fit_steps: int = 2000
    fit_tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ContractViolation("gamma must lie in [0, 1) for the "
                                    "geometric target bound")
        if self.learning_rate <= 0 or self.max_fit_steps < 1 or \
                self.fit_tolerance <= 0:
            raise ContractViolation("nfq config values must be positive")


def _grid_max_q(q: QNet, states: np.ndarray,
                grid: ActionGrid) -> tuple[np.ndarray, np.ndarray]:
    """Max and argmax of Q over the grid for each state row."""
    n, a = len(states), len(grid)
    rep_s = np.repeat(states, a, axis=0)
    rep_a = np.tile(grid.actions, (n, 1))
    vals = q.values(rep_s, rep_a).reshape(n, a)
    return vals.max(axis=1), vals.argmax(axis=1)


def nfq_targets(q: QNet, dataset: TransitionDataset, grid: ActionGrid,
                gamma: float) -> np.ndarray:
    """Bootstrap regression targets ``r(s') + gamma * max_a' Q(s', a')``.

    Waterfall resets are ordinary transitions (no terminal states).
    Targets are clamped into ``[0, r_max/(1-gamma)] = [0, 50]``, the
    range any true discounted value must occupy, which keeps early
    iterations from chasing their own overshoot.
    """
    best, _ = _grid_max_q(q, dataset.next_states, grid)
    raw = reward(dataset.next_states) + gamma * best
    return np.clip(raw, 0.0, 5.0 / (1.0 - gamma))


def _fit_qnet(q: QNet, inputs: np.ndarray, targets: np.ndarray,
              config: NfqConfig) -> float:
    """Full-batch regression of the network onto fixed targets."""
    opt = Adam(q.params(), lr=config.learning_rate)
    target_t = Tensor(targets)
    x = Tensor(inputs)
    prev = np.inf
    loss_val = np.inf
    for step in range(config.max_fit_steps):
        diff = q.forward(x) - target_t
        loss = (diff * diff).mean()
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise NumericalError(
                f"fitted-Q regression diverged at step {step}")
        if abs(prev - loss_val) < config.fit_tolerance:
            break
        prev = loss_val
        opt.zero_grad()
        loss.backward()
        opt.step()
    return loss_val


def nfq_train(dataset: TransitionDataset, grid: ActionGrid,
              iterations: int = 20,
              config: NfqConfig | None = None) -> QNet:
    """Fitted Q-iteration on the fixed batch with a warm-started net."""
    if len(dataset) < 1:
        raise ContractViolation("dataset must be nonempty")
    if iterations < 1:
        raise ContractViolation("iterations must be >= 1")
    config = NfqConfig() if config is None else config
    rng = seed_rng(config.seed, STREAM_MODEL)
    q = QNet(rng)
    inputs = np.hstack([dataset.states, dataset.actions])
    for it in range(iterations):
        targets = nfq_targets(q, dataset, grid, config.gamma)
        loss = _fit_qnet(q, inputs, targets, config)
        LOGGER.debug("fitted-Q iteration %d: regression loss %.3e", it, loss)
    return q


def nfq_act(q: QNet, state: np.ndarray, grid: ActionGrid) -> np.ndarray:
    """Greedy grid action; ties go to the lowest grid index."""
    state = np.asarray(state, dtype=np.float64)
    _, idx = _grid_max_q(q, np.atleast_2d(state), grid)
    out = grid.actions[idx]
    return out[0] if state.ndim == 1 else out


def nfq_policy(q: QNet, grid: ActionGrid):
    """Batched greedy policy closure for the true-environment evaluator."""
    return lambda states: nfq_act(q, states, grid)
