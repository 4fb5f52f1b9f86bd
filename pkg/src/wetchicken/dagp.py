"""Two-mode mixture-of-GPs transition model with data association.

Every one-step transition is explained by one of two latent regimes:
*staying* in the river (smooth drift plus turbulence whose size depends on
where you are) or *falling* (a reset to the origin). Each mode ``k`` owns

* two flow GPs ``f^(k)`` predicting the next state per output dimension,
* two log-noise GPs ``g^(k)`` whose exponential gives the heteroscedastic
  observation noise ``sigma^(k) = exp(g^(k))``, floored at 1e-3,
* and one assignment GP ``lambda^(k)`` whose softmax across modes gives
  the probability that a transition at that input belongs to the mode.

Which mode produced each training point is unknown, so training ascends a
sampled evidence lower bound with free per-point mode beliefs ``q(l_t)``:
gradient steps on all GP parameters alternate with closed-form belief
updates. Inputs are the 4-vector ``(x, y, ax, ay)`` and outputs are
absolute next states; both are standardized using statistics stored with
the model.

After training, modes are reordered so index 0 is the staying mode and
index 1 the falling mode, judged by which mode claims more belief mass on
transitions that ended exactly at the origin.
"""
from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .autodiff import Tensor, as_tensor, concat, stack, where
from .env import TransitionDataset
from .errors import ContractViolation
from .gp import FrozenGP, SparseGP
from .optim import Adam
from .seeding import STREAM_MODEL, seed_rng

K_MODES = 2
SIGMA_FLOOR = 1e-3
STAY, FALL = 0, 1

_LOG_2PI = float(np.log(2.0 * np.pi))


def mode_probabilities(lambdas: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, stabilized by max subtraction."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if not np.all(np.isfinite(lambdas)):
        raise ContractViolation("assignment logits must be finite")
    shifted = lambdas - lambdas.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Standardizer:
    """Per-dimension affine scaling fitted on the training set."""

    in_mean: np.ndarray
    in_scale: np.ndarray
    out_mean: np.ndarray
    out_scale: np.ndarray

    @classmethod
    def fit(cls, dataset: TransitionDataset) -> "Standardizer":
        inputs = np.concatenate([dataset.states, dataset.actions], axis=1)
        outputs = dataset.next_states
        return cls(
            in_mean=inputs.mean(axis=0),
            in_scale=np.maximum(inputs.std(axis=0), 1e-8),
            out_mean=outputs.mean(axis=0),
            out_scale=np.maximum(outputs.std(axis=0), 1e-8),
        )

    def encode_inputs(self, states: np.ndarray,
                      actions: np.ndarray) -> np.ndarray:
        raw = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)],
                             axis=1)
        return (raw - self.in_mean) / self.in_scale

    def encode_outputs(self, next_states: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(next_states) - self.out_mean) / self.out_scale

    def decode_outputs(self, standardized: np.ndarray) -> np.ndarray:
        return standardized * self.out_scale + self.out_mean

    def to_dict(self) -> dict:
        return {k: [float(v) for v in getattr(self, k)]
                for k in ("in_mean", "in_scale", "out_mean", "out_scale")}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        try:
            return cls(**{k: np.array(d[k], dtype=np.float64)
                          for k in ("in_mean", "in_scale",
                                    "out_mean", "out_scale")})
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolation(f"malformed standardizer: {exc}") from exc


@dataclass
class TrainConfig:
    iterations: int = 3000
    minibatch: int = 64
    learning_rate: float = 1e-2
    samples: int = 5
    seed: int = 0
    n_inducing: int = 100
    belief_update_every: int = 50
    belief_warmup: int = 300
    heuristic_belief_init: bool = False
    z_init: str = "subset"

    def __post_init__(self):
        if min(self.iterations, self.minibatch, self.samples,
               self.n_inducing, self.belief_update_every) < 1 or \
                self.learning_rate <= 0 or self.belief_warmup < 0:
            raise ContractViolation("train config values must be positive")
        if self.z_init not in ("subset", "kmeans"):
            raise ContractViolation(
                "z_init must be 'subset' or 'kmeans'")


class DagpModel:
    """The K=2 data-association mixture; see the module docstring."""

    def __init__(self, standardizer: Standardizer,
                 flow_gps: list[list[SparseGP]],
                 noise_gps: list[list[SparseGP]],
                 assign_gps: list[SparseGP]):
        if len(flow_gps) != K_MODES or len(noise_gps) != K_MODES or \
                len(assign_gps) != K_MODES or \
                any(len(row) != 2 for row in flow_gps + noise_gps):
            raise ContractViolation("model needs K=2 modes x 2 output dims")
        self.standardizer = standardizer
        self.flow_gps = flow_gps
        self.noise_gps = noise_gps
        self.assign_gps = assign_gps

    K = K_MODES

    @classmethod
    def init_from_dataset(cls, dataset: TransitionDataset, n_inducing: int,
                          rng: np.random.Generator,
                          z_init: str = "subset") -> "DagpModel":
        """Fresh model with inducing inputs placed on the training inputs.

        With ``z_init="subset"`` each GP gets its own random subset, which
        also breaks the symmetry between the two modes before the first
        belief update. With ``z_init="kmeans"`` all GPs share one set of
        k-means centers, which covers large datasets far more evenly than
        a subsample (tiny per-GP jitter keeps the modes asymmetric).
        """
        std = Standardizer.fit(dataset)
        xhat = std.encode_inputs(dataset.states, dataset.actions)
        m = min(n_inducing, len(dataset))

        if z_init == "kmeans" and m < len(dataset):
            from scipy.cluster.vq import kmeans2

            centers, _ = kmeans2(xhat, m, minit="++", seed=int(
                rng.integers(2**31 - 1)))

            def pick() -> np.ndarray:
                return centers + rng.normal(size=centers.shape) * 1e-3
        else:
            def pick() -> np.ndarray:
                return xhat[rng.choice(len(dataset), size=m, replace=False)]

        flow = [[SparseGP(pick(), mean_function=0.0) for _ in range(2)]
                for _ in range(K_MODES)]
        noise = [[SparseGP(pick(), signal_variance=0.25, mean_function=-1.0)
                  for _ in range(2)] for _ in range(K_MODES)]
        assign = [SparseGP(pick()) for _ in range(K_MODES)]
        return cls(std, flow, noise, assign)

    def all_gps(self) -> list[SparseGP]:
        out = [g for row in self.flow_gps for g in row]
        out += [g for row in self.noise_gps for g in row]
        out += list(self.assign_gps)
        return out

    def params(self) -> list[Tensor]:
        return [p for g in self.all_gps() for p in g.params()]

    def swap_modes(self) -> None:
        self.flow_gps.reverse()
        self.noise_gps.reverse()
        self.assign_gps.reverse()

    def clone(self) -> "DagpModel":
        return copy.deepcopy(self)

    def encode(self, dataset: TransitionDataset) -> tuple[np.ndarray,
                                                          np.ndarray]:
        return (self.standardizer.encode_inputs(dataset.states,
                                                dataset.actions),
                self.standardizer.encode_outputs(dataset.next_states))

    def freeze(self) -> "FrozenDagp":
        return FrozenDagp(self)

    # -- serialization -------------------------------------------------------

    def to_checkpoint(self) -> dict:
        return {
            "standardizer": self.standardizer.to_dict(),
            "K": K_MODES,
            "flow_gps": [[g.to_fragment() for g in row]
                         for row in self.flow_gps],
            "noise_gps": [[g.to_fragment() for g in row]
                          for row in self.noise_gps],
            "assign_gps": [g.to_fragment() for g in self.assign_gps],
        }

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "DagpModel":
        try:
            if doc["K"] != K_MODES:
                raise ContractViolation(f"unsupported mode count {doc['K']}")
            std = Standardizer.from_dict(doc["standardizer"])
            flow = [[SparseGP.from_fragment(f) for f in row]
                    for row in doc["flow_gps"]]
            noise = [[SparseGP.from_fragment(f) for f in row]
                     for row in doc["noise_gps"]]
            assign = [SparseGP.from_fragment(f) for f in doc["assign_gps"]]
        except (KeyError, TypeError) as exc:
            raise ContractViolation(f"malformed model checkpoint: {exc}") \
                from exc
        return cls(std, flow, noise, assign)


# -- the sampled evidence lower bound -----------------------------------------


def draw_elbo_eps(S: int, batch_size: int, K: int,
                  rng: np.random.Generator) -> dict:
    """Standard-normal draws for one bound evaluation, in a fixed order."""
    return {
        "f": rng.standard_normal((K, 2, S, batch_size)),
        "g": rng.standard_normal((K, 2, S, batch_size)),
        "lam": rng.standard_normal((K, S, batch_size)),
    }


def _log_softmax_over_modes(lams: list[Tensor]) -> list[Tensor]:
    shift = Tensor(np.maximum.reduce([t.data for t in lams]))
    exps = [(t - shift).exp() for t in lams]
    total = exps[0]
    for e in exps[1:]:
        total = total + e
    log_total = total.log()
    return [t - shift - log_total for t in lams]


def elbo_given_eps(model: DagpModel, beliefs: np.ndarray, xhat: np.ndarray,
                   y_std: np.ndarray, eps: dict,
                   total_n: int | None = None) -> Tensor:
    """The structured bound for one (standardized) batch and fixed draws.

    Per point ``t`` and mode ``k`` the data term is
    ``q(l_t=k) * [E log N(y_t | f^(k), sigma^(k)^2) + E log softmax(lam)_k
    - log q(l_t=k)]`` with all expectations estimated from the shared eps
    samples; the batch sum is rescaled by ``total_n / batch`` and every
    GP's KL to its prior is subtracted once. Beliefs enter as constants.
    """
    batch = xhat.shape[0]
    beliefs = np.asarray(beliefs, dtype=np.float64)
    if beliefs.shape != (batch, K_MODES):
        raise ContractViolation("beliefs must be (batch, K)")
    if not np.allclose(beliefs.sum(axis=1), 1.0, atol=1e-9) or \
            np.any(beliefs < 0):
        raise ContractViolation("beliefs must be K-simplex rows")
    total_n = batch if total_n is None else int(total_n)
    X = Tensor(xhat)

    kl_total = None

    def add_kl(kl: Tensor) -> None:
        nonlocal kl_total
        kl_total = kl if kl_total is None else kl_total + kl

    log_liks = []  # per mode, (batch,) expected log-likelihood of y
    for k in range(K_MODES):
        terms = None
        for d in range(2):
            f_mean, f_var, f_kl = model.flow_gps[k][d].posterior_terms(X)
            g_mean, g_var, g_kl = model.noise_gps[k][d].posterior_terms(X)
            add_kl(f_kl)
            add_kl(g_kl)
            f_s = f_mean + f_var.sqrt() * Tensor(eps["f"][k, d])
            g_s = g_mean + g_var.sqrt() * Tensor(eps["g"][k, d])
            sigma = g_s.exp().clip(SIGMA_FLOOR, np.inf)
            resid = (Tensor(y_std[:, d]) - f_s) / sigma
            ll = (-0.5 * _LOG_2PI) - sigma.log() - 0.5 * resid * resid
            terms = ll if terms is None else terms + ll
        log_liks.append(terms.mean(axis=0))

    lam_s = []
    for k in range(K_MODES):
        l_mean, l_var, l_kl = model.assign_gps[k].posterior_terms(X)
        add_kl(l_kl)
        lam_s.append(l_mean + l_var.sqrt() * Tensor(eps["lam"][k]))
    log_sm = [t.mean(axis=0) for t in _log_softmax_over_modes(lam_s)]

    entropy = -np.sum(np.where(beliefs > 0.0,
                               beliefs * np.log(np.clip(beliefs, 1e-300, 1.0)),
                               0.0), axis=1)
    data_term = Tensor(entropy).sum()
    for k in range(K_MODES):
        data_term = data_term + (Tensor(beliefs[:, k])
                                 * (log_liks[k] + log_sm[k])).sum()
    return data_term * (float(total_n) / batch) - kl_total


def elbo(model: DagpModel, beliefs: np.ndarray, batch: TransitionDataset,
         S: int, rng: np.random.Generator,
         total_n: int | None = None) -> Tensor:
    """Monte-Carlo bound estimate with fresh draws from ``rng``."""
    xhat, y_std = model.encode(batch)
    eps = draw_elbo_eps(S, len(batch), K_MODES, rng)
    return elbo_given_eps(model, beliefs, xhat, y_std, eps, total_n=total_n)


# -- belief updates ------------------------------------------------------------


def update_beliefs(model: DagpModel, dataset: TransitionDataset) -> np.ndarray:
    """Closed-form responsibilities from posterior-mean predictions.

    ``q(l_t=k) propto softmax(E lam(x_t))_k * exp(sum_d log N(y_td |
    E f^(k)_d, max(exp(E g^(k)_d), floor)^2))``, normalized per point by
    log-sum-exp.
    """
    xhat, y_std = model.encode(dataset)
    frozen = model.freeze()
    lam_means = np.stack([f.predict_np(xhat)[0] for f in frozen.assign],
                         axis=1)
    log_prior = np.log(mode_probabilities(lam_means))
    log_rho = np.empty((len(dataset), K_MODES))
    for k in range(K_MODES):
        ll = np.zeros(len(dataset))
        for d in range(2):
            mu = frozen.flow[k][d].predict_np(xhat)[0]
            sig = np.maximum(np.exp(frozen.noise[k][d].predict_np(xhat)[0]),
                             SIGMA_FLOOR)
            ll += (-0.5 * _LOG_2PI - np.log(sig)
                   - 0.5 * ((y_std[:, d] - mu) / sig) ** 2)
        log_rho[:, k] = log_prior[:, k] + ll
    shifted = log_rho - log_rho.max(axis=1, keepdims=True)
    w = np.exp(shifted)
    return w / w.sum(axis=1, keepdims=True)


def initial_beliefs(dataset: TransitionDataset, rng: np.random.Generator,
                    heuristic: bool = False) -> np.ndarray:
    """Uniform beliefs with a small symmetry-breaking jitter.

    With ``heuristic=True``, transitions that landed exactly at the origin
    from ``x > 2`` start with fall-mode belief 0.9 and every other
    transition starts with stay-mode belief 0.9. The two-sided split is
    what makes the warm-up phase effective: leaving non-reset rows at 0.5
    would hand the fall-mode GPs more gradient mass from ordinary drift
    transitions than from resets at any dataset size, so the fall mode
    would never specialize and the first belief sweep would merge the
    modes.
    """
    n = len(dataset)
    jitter = rng.uniform(-0.01, 0.01, size=n)
    beliefs = np.column_stack([0.5 + jitter, 0.5 - jitter])
    if heuristic:
        fell = (dataset.next_states[:, 0] == 0.0) & \
            (dataset.next_states[:, 1] == 0.0) & (dataset.states[:, 0] > 2.0)
        beliefs[fell] = (0.1, 0.9)
        beliefs[~fell] = (0.9, 0.1)
    return beliefs


class TrainResult(NamedTuple):
    model: "DagpModel"
    beliefs: np.ndarray
    curve: np.ndarray


def train(dataset: TransitionDataset, config: TrainConfig,
          progress=None) -> TrainResult:
    """Fit the mixture by stochastic bound ascent with belief sweeps.

    Minibatch gradient steps run on all GP parameters with beliefs held
    fixed; once ``belief_warmup`` iterations have given the modes time to
    commit to their initial responsibilities, the beliefs are refreshed
    from the current posteriors every ``belief_update_every`` iterations.
    A non-finite bound estimate aborts training and restores the last
    snapshot taken at a belief sweep. Modes are put in canonical
    (stay, fall) order at the end. ``progress``, if given, is called as
    ``progress(iteration, bound_value, beliefs)`` after every belief sweep.
    """
    rng = seed_rng(config.seed, STREAM_MODEL)
    model = DagpModel.init_from_dataset(dataset, config.n_inducing, rng,
                                        config.z_init)
    beliefs = initial_beliefs(dataset, rng, config.heuristic_belief_init)
    xhat, y_std = model.encode(dataset)
    n = len(dataset)
    batch_size = min(config.minibatch, n)
    params = model.params()
    opt = Adam(params, lr=config.learning_rate)
    curve = np.full(config.iterations, np.nan)
    snapshot = ([p.data.copy() for p in params], beliefs.copy())
    for it in range(config.iterations):
        idx = rng.choice(n, size=batch_size, replace=False)
        eps = draw_elbo_eps(config.samples, batch_size, K_MODES, rng)
        bound = elbo_given_eps(model, beliefs[idx], xhat[idx], y_std[idx],
                               eps, total_n=n)
        value = bound.item()
        curve[it] = value
        if not np.isfinite(value):
            for p, saved in zip(params, snapshot[0]):
                p.data = saved.copy()
            beliefs = snapshot[1].copy()
            curve = curve[: it + 1]
            break
        opt.zero_grad()
        (-bound).backward()
        opt.step()
        if (it + 1) >= config.belief_warmup and \
                (it + 1) % config.belief_update_every == 0:
            beliefs = update_beliefs(model, dataset)
            snapshot = ([p.data.copy() for p in params], beliefs.copy())
            if progress is not None:
                progress(it + 1, value, beliefs)
    beliefs = update_beliefs(model, dataset)
    if _fall_mode_index(beliefs, dataset) == 0:
        model.swap_modes()
        beliefs = beliefs[:, ::-1].copy()
    return TrainResult(model, beliefs, curve)


def _fall_mode_index(beliefs: np.ndarray, dataset: TransitionDataset) -> int:
    """Which mode claims more belief mass on origin-reset transitions."""
    fell = (dataset.next_states[:, 0] == 0.0) & \
        (dataset.next_states[:, 1] == 0.0)
    if not np.any(fell):
        return FALL
    return int(np.argmax(beliefs[fell].sum(axis=0)))


# -- next-state sampling ---------------------------------------------------------


class FrozenDagp:
    """Read-only snapshot of a trained model for rollout sampling."""

    def __init__(self, model: DagpModel):
        self.flow = [[g.freeze() for g in row] for row in model.flow_gps]
        self.noise = [[g.freeze() for g in row] for row in model.noise_gps]
        self.assign = [g.freeze() for g in model.assign_gps]
        std = model.standardizer
        self.in_mean, self.in_scale = std.in_mean, std.in_scale
        self.out_mean, self.out_scale = std.out_mean, std.out_scale

    def draw_eps(self, n: int, rng: np.random.Generator) -> dict:
        """One bundle of draws for ``n`` parallel transitions."""
        return {
            "lam": rng.standard_normal((n, K_MODES)),
            "mode_u": rng.uniform(0.0, 1.0, size=n),
            "f": rng.standard_normal((n, K_MODES, 2)),
            "sig": rng.standard_normal((n, K_MODES, 2)),
            "obs": rng.standard_normal((n, 2)),
        }

    def encode_inputs_t(self, states: Tensor, actions: Tensor) -> Tensor:
        raw = concat([states, actions], axis=1)
        return (raw - Tensor(self.in_mean)) * Tensor(1.0 / self.in_scale)

    def sample_next(self, states, actions, eps: dict,
                    force_mode=None) -> Tensor:
        """Pathwise next-state draws for a batch of state-action rows.

        The mode is drawn from the sampled assignment softmax with the
        bundled uniform (a plain draw, not differentiated); within the
        selected mode, gradients flow through the flow and noise samples
        back into ``states`` and ``actions``. Outputs are de-standardized
        and deliberately not clipped to the river box.
        """
        states, actions = as_tensor(states), as_tensor(actions)
        xhat = self.encode_inputs_t(states, actions)
        lam = np.empty_like(eps["lam"])
        for k in range(K_MODES):
            m, v = self.assign[k].predict_np(xhat.data)
            lam[:, k] = m + np.sqrt(v) * eps["lam"][:, k]
        probs = mode_probabilities(lam)
        if force_mode is None:
            modes = np.where(eps["mode_u"] < probs[:, STAY], STAY, FALL)
        else:
            modes = np.broadcast_to(np.asarray(force_mode, dtype=int),
                                    eps["mode_u"].shape)
        return self._mode_blend(xhat, modes, eps)

    def sample_next_scored(self, states, actions, eps: dict):
        """Next-state draws plus the log-probability of each drawn mode.

        Draws match ``sample_next`` for the same eps bundle, but the
        assignment logits stay on the tape, so the returned per-row
        log-probability is differentiable with respect to ``states`` and
        ``actions``. Pathwise gradients alone cannot express how an
        action shifts the odds of the categorical mode draw; weighting
        this log-probability by a detached return-to-go supplies exactly
        that missing term, keeping the combined estimator unbiased.
        """
        states, actions = as_tensor(states), as_tensor(actions)
        xhat = self.encode_inputs_t(states, actions)
        lam_t = []
        for k in range(K_MODES):
            m, v = self.assign[k].predict(xhat)
            lam_t.append(m + v.sqrt() * Tensor(eps["lam"][:, k]))
        lam = np.stack([t.data for t in lam_t], axis=1)
        probs = mode_probabilities(lam)
        modes = np.where(eps["mode_u"] < probs[:, STAY], STAY, FALL)
        hi = lam_t[0]
        for t in lam_t[1:]:
            hi = where(hi.data >= t.data, hi, t)
        sum_exp = (lam_t[0] - hi).exp()
        for t in lam_t[1:]:
            sum_exp = sum_exp + (t - hi).exp()
        log_norm = hi + sum_exp.log()
        chosen = where(modes == STAY, lam_t[STAY], lam_t[FALL])
        return self._mode_blend(xhat, modes, eps), chosen - log_norm

    def _mode_blend(self, xhat: Tensor, modes: np.ndarray,
                    eps: dict) -> Tensor:
        """Within-mode pathwise draws blended by the drawn mode indices."""
        dims = []
        for d in range(2):
            cands = []
            for k in range(K_MODES):
                f_mean, f_var = self.flow[k][d].predict(xhat)
                g_mean, g_var = self.noise[k][d].predict(xhat)
                f_s = f_mean + f_var.sqrt() * Tensor(eps["f"][:, k, d])
                g_s = g_mean + g_var.sqrt() * Tensor(eps["sig"][:, k, d])
                sigma = g_s.exp().clip(SIGMA_FLOOR, np.inf)
                cands.append(f_s + sigma * Tensor(eps["obs"][:, d]))
            dims.append(where(modes == STAY, cands[STAY], cands[FALL]))
        out_std = stack(dims, axis=1)
        return out_std * Tensor(self.out_scale) + Tensor(self.out_mean)


def sample_next_state(model, state, action, eps: dict,
                      force_mode=None) -> np.ndarray:
    """Single-transition draw; see ``FrozenDagp.sample_next``.

    ``model`` may be a DagpModel (frozen on the fly) or a FrozenDagp. The
    eps bundle holds per-mode assignment draws ``lam (K,)``, a categorical
    uniform ``mode_u``, flow and log-noise draws ``f``/``sig`` of shape
    (K, 2), and the observation draw ``obs (2,)``.
    """
    frozen = model.freeze() if isinstance(model, DagpModel) else model
    batched = {
        "lam": np.asarray(eps["lam"], dtype=np.float64).reshape(1, K_MODES),
        "mode_u": np.atleast_1d(np.float64(eps["mode_u"])),
        "f": np.asarray(eps["f"], dtype=np.float64).reshape(1, K_MODES, 2),
        "sig": np.asarray(eps["sig"], dtype=np.float64).reshape(1, K_MODES, 2),
        "obs": np.asarray(eps["obs"], dtype=np.float64).reshape(1, 2),
    }
    out = frozen.sample_next(np.atleast_2d(state), np.atleast_2d(action),
                             batched, force_mode=force_mode)
    return out.data[0]


# -- interpretability grids -------------------------------------------------------


@dataclass
class GridBundle:
    """Fall-probability and staying-noise surfaces over (x, y) cells."""

    xs: np.ndarray
    ys: np.ndarray
    p_fall: np.ndarray        # (len(xs), len(ys))
    sigma_x_stay: np.ndarray  # same layout, env units

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "p_fall", "sigma_x_stay"])
            for i, x in enumerate(self.xs):
                for j, y in enumerate(self.ys):
                    writer.writerow([repr(float(x)), repr(float(y)),
                                     repr(float(self.p_fall[i, j])),
                                     repr(float(self.sigma_x_stay[i, j]))])


def grid_centers(resolution: int) -> np.ndarray:
    """Cell-center coordinates of a square grid over one river axis."""
    edges = np.linspace(0.0, 5.0, resolution + 1)
    return 0.5 * (edges[:-1] + edges[1:])


def export_grids(model: DagpModel, resolution: int,
                 rng: np.random.Generator,
                 n_lambda_samples: int = 100) -> GridBundle:
    """Interpretability surfaces at action (0, 0) over grid cell centers.

    Fall probability is the Monte-Carlo mean of ``softmax(lambda)`` at the
    fall index over sampled assignment functions; the staying noise is the
    posterior-mean heteroscedastic sigma of the x output, de-standardized.
    """
    if resolution < 1:
        raise ContractViolation("resolution must be positive")
    centers = grid_centers(resolution)
    gx, gy = np.meshgrid(centers, centers, indexing="ij")
    states = np.column_stack([gx.ravel(), gy.ravel()])
    actions = np.zeros_like(states)
    xhat = model.standardizer.encode_inputs(states, actions)
    frozen = model.freeze()
    lam = np.empty((n_lambda_samples, len(states), K_MODES))
    for k in range(K_MODES):
        m, v = frozen.assign[k].predict_np(xhat)
        lam[:, :, k] = m + np.sqrt(v) * rng.standard_normal(
            (n_lambda_samples, len(states)))
    p_fall = mode_probabilities(lam)[:, :, FALL].mean(axis=0)
    g_mean, _ = frozen.noise[STAY][0].predict_np(xhat)
    sigma_x = np.maximum(np.exp(g_mean), SIGMA_FLOOR) * \
        model.standardizer.out_scale[0]
    shape = (resolution, resolution)
    return GridBundle(centers, centers, p_fall.reshape(shape),
                      sigma_x.reshape(shape))


# -- beliefs CSV -------------------------------------------------------------------


def save_beliefs_csv(beliefs: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "belief_stay", "belief_fall"])
        for i, row in enumerate(beliefs):
            writer.writerow([i, repr(float(row[STAY])), repr(float(row[FALL]))])


def load_beliefs_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["index", "belief_stay", "belief_fall"]:
            raise ContractViolation(f"unexpected beliefs header {header!r}")
        rows = [(float(r[1]), float(r[2])) for r in reader]
    return np.array(rows, dtype=np.float64)
