"""Sparse variational Gaussian process regression primitive.

One :class:`SparseGP` represents a single latent function with an ARD
squared-exponential prior, a constant mean function, and a free-form
Gaussian posterior ``q(u) = N(m, L_S L_S^T)`` over the function values at
``M`` trainable inducing inputs. It exposes exactly what the mixture model
and the baselines consume:

* ``predict``   marginal posterior mean and variance at test points,
* ``sample``    reparameterized marginal draws (mean + sqrt(var) * eps),
* ``kl_to_prior``  the KL(q(u) || p(u)) term of any variational bound.

Everything is differentiable through :mod:`wetchicken.autodiff`; positive
quantities live as logs so optimization is unconstrained. Gram matrices
receive a relative jitter ladder starting at ``1e-6 * signal_variance``
and escalating tenfold up to ``1e-2`` before giving up.

``freeze()`` bakes the posterior into plain matrices for the rollout hot
path: prediction becomes two matrix products with gradients flowing only
into the test inputs, which is all a policy update needs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from . import accel
from .autodiff import (
    Tensor,
    ard_kernel,
    as_tensor,
    cholesky,
    diag_embed,
    solve_triangular,
)
from .errors import ContractViolation, NumericalError

JITTER_LADDER = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
MIN_VARIANCE = 1e-12


@dataclass(frozen=True)
class KernelParams:
    """ARD squared-exponential hyperparameters, in their natural scale."""

    signal_variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lengthscales",
                           np.asarray(self.lengthscales, dtype=np.float64))
        if not (self.signal_variance > 0):
            raise ContractViolation("signal_variance must be positive")
        if self.lengthscales.ndim != 1 or not np.all(self.lengthscales > 0):
            raise ContractViolation("lengthscales must be a positive vector")


def kernel_matrix(params: KernelParams, A: np.ndarray,
                  B: np.ndarray) -> np.ndarray:
    """Gram matrix ``k(A, B)`` as a plain array (no tape)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ContractViolation("kernel inputs must be 2-D with equal width")
    if A.shape[1] != params.lengthscales.shape[0]:
        raise ContractViolation("lengthscale count must match input width")
    return accel.ard_sqexp(A, B, 1.0 / params.lengthscales,
                           params.signal_variance)


def _find_jitter(K: np.ndarray, sv: float) -> float:
    """Smallest ladder rung that makes ``K + rung*sv*I`` factorizable."""
    eye = np.eye(K.shape[0])
    for rung in JITTER_LADDER:
        try:
            np.linalg.cholesky(K + rung * sv * eye)
            return rung
        except np.linalg.LinAlgError:
            continue
    diag = np.diagonal(K)
    raise NumericalError(
        "Cholesky failed after the full jitter ladder "
        f"(relative rungs {JITTER_LADDER}); matrix size {K.shape[0]}, "
        f"signal variance {sv:.3e}, diagonal range "
        f"[{diag.min():.3e}, {diag.max():.3e}]")


def jittered_cholesky_np(K: np.ndarray, sv: float) -> tuple[np.ndarray, float]:
    """Plain-numpy ladder Cholesky; returns the factor and the rung used."""
    rung = _find_jitter(K, sv)
    L = np.linalg.cholesky(K + rung * sv * np.eye(K.shape[0]))
    return L, rung


class SparseGP:
    """A variational GP over one scalar-valued latent function.

    Parameters
    ----------
    inducing_inputs : (M, D) array
        Initial inducing locations; rows must be pairwise distinct.
    signal_variance, lengthscales : positive initial hyperparameters.
    mean_function : constant prior mean, also used to center ``q(u)``.
    """

    def __init__(self, inducing_inputs: np.ndarray, *,
                 signal_variance: float = 1.0,
                 lengthscales: np.ndarray | float = 1.0,
                 mean_function: float = 0.0):
        Z = np.array(inducing_inputs, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[0] < 1:
            raise ContractViolation("inducing_inputs must be (M >= 1, D)")
        M, D = Z.shape
        if M > 1:
            d2 = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(-1)
            d2[np.diag_indices(M)] = np.inf
            if d2.min() <= 0.0:
                raise ContractViolation("inducing inputs contain duplicate rows")
        ls = np.broadcast_to(np.asarray(lengthscales, dtype=np.float64),
                             (D,)).copy()
        if not (signal_variance > 0) or not np.all(ls > 0):
            raise ContractViolation("hyperparameters must be positive")
        self.log_sv = Tensor(np.log(signal_variance), requires_grad=True)
        self.log_ls = Tensor(np.log(ls), requires_grad=True)
        self.Z = Tensor(Z, requires_grad=True)
        self.mean_const = Tensor(float(mean_function), requires_grad=True)
        self.q_mean = Tensor(np.full(M, float(mean_function)),
                             requires_grad=True)
        # raw factor: strict lower part free, diagonal stored as logs so the
        # factor diagonal stays positive; zeros give L_S = I
        self.q_chol_raw = Tensor(np.zeros((M, M)), requires_grad=True)
        self._strict_lower = np.tril(np.ones((M, M)), k=-1)

    # -- bookkeeping --------------------------------------------------------

    @property
    def n_inducing(self) -> int:
        return self.Z.data.shape[0]

    @property
    def input_dim(self) -> int:
        return self.Z.data.shape[1]

    def params(self) -> list[Tensor]:
        return [self.log_sv, self.log_ls, self.Z, self.mean_const,
                self.q_mean, self.q_chol_raw]

    def q_chol(self) -> Tensor:
        raw = self.q_chol_raw
        return raw * Tensor(self._strict_lower) + diag_embed(
            raw.diagonal().exp())

    def set_posterior(self, q_mean: np.ndarray, q_chol: np.ndarray) -> None:
        """Overwrite ``q(u)`` from a mean vector and a lower factor."""
        M = self.n_inducing
        q_mean = np.asarray(q_mean, dtype=np.float64)
        q_chol = np.asarray(q_chol, dtype=np.float64)
        if q_mean.shape != (M,) or q_chol.shape != (M, M):
            raise ContractViolation("posterior shapes must match M")
        d = np.diagonal(q_chol)
        if np.any(d <= 0):
            raise ContractViolation("factor diagonal must be positive")
        raw = np.tril(q_chol, k=-1)
        raw[np.diag_indices(M)] = np.log(d)
        self.q_mean.data = q_mean.copy()
        self.q_chol_raw.data = raw

    # -- core linear algebra -------------------------------------------------

    def _kuu_chol(self) -> Tensor:
        """Tape-tracked Cholesky of the jittered inducing Gram matrix."""
        Kuu = ard_kernel(self.Z, self.Z, self.log_ls, self.log_sv)
        eye = np.eye(self.n_inducing)
        for rung in JITTER_LADDER:
            try:
                return cholesky(Kuu + Tensor(eye * rung) * self.log_sv.exp())
            except np.linalg.LinAlgError:
                continue
        # re-run the ladder scan purely for its diagnostic error message
        _find_jitter(Kuu.data, float(np.exp(self.log_sv.data)))
        raise NumericalError("jitter scan succeeded but graph Cholesky failed")

    def predict(self, X) -> tuple[Tensor, Tensor]:
        """Marginal posterior mean and variance at each row of ``X``."""
        X = as_tensor(X)
        if X.data.ndim != 2 or X.data.shape[1] != self.input_dim:
            raise ContractViolation(
                f"X must be (n, {self.input_dim}), got {X.data.shape}")
        L = self._kuu_chol()
        Kux = ard_kernel(self.Z, X, self.log_ls, self.log_sv)
        A = solve_triangular(L, Kux, trans="N")
        ones = Tensor(np.ones(self.n_inducing))
        v = solve_triangular(L, self.q_mean - self.mean_const * ones,
                             trans="N")
        mean = self.mean_const + A.T @ v
        D = solve_triangular(L, A, trans="T")
        E = self.q_chol().T @ D
        var = (self.log_sv.exp() - (A * A).sum(axis=0)
               + (E * E).sum(axis=0)).clip(MIN_VARIANCE, np.inf)
        return mean, var

    def sample(self, X, eps) -> Tensor:
        """Reparameterized marginal draw: ``mean + sqrt(var) * eps``."""
        eps = as_tensor(eps)
        mean, var = self.predict(X)
        if eps.data.shape[-1] != mean.data.shape[0]:
            raise ContractViolation("eps must have one draw per test point")
        return mean + var.sqrt() * eps

    def kl_to_prior(self) -> Tensor:
        """KL(q(u) || p(u)) with both Gaussians over the inducing outputs."""
        L = self._kuu_chol()
        L_S = self.q_chol()
        ones = Tensor(np.ones(self.n_inducing))
        v = solve_triangular(L, self.q_mean - self.mean_const * ones,
                             trans="N")
        return self._kl_from_parts(L, L_S, v)

    def _kl_from_parts(self, L: Tensor, L_S: Tensor, v: Tensor) -> Tensor:
        half_tr = solve_triangular(L, L_S, trans="N")
        M = float(self.n_inducing)
        return (0.5 * ((half_tr * half_tr).sum() + (v * v).sum() - M)
                + L.diagonal().log().sum() - L_S.diagonal().log().sum())

    def posterior_terms(self, X) -> tuple[Tensor, Tensor, Tensor]:
        """``(mean, variance, kl_to_prior)`` sharing one factorization.

        Equivalent to ``predict(X)`` plus ``kl_to_prior()`` but roughly
        half the linear-algebra cost, for bound evaluations that need both.
        """
        X = as_tensor(X)
        if X.data.ndim != 2 or X.data.shape[1] != self.input_dim:
            raise ContractViolation(
                f"X must be (n, {self.input_dim}), got {X.data.shape}")
        L = self._kuu_chol()
        L_S = self.q_chol()
        Kux = ard_kernel(self.Z, X, self.log_ls, self.log_sv)
        A = solve_triangular(L, Kux, trans="N")
        ones = Tensor(np.ones(self.n_inducing))
        v = solve_triangular(L, self.q_mean - self.mean_const * ones,
                             trans="N")
        mean = self.mean_const + A.T @ v
        D = solve_triangular(L, A, trans="T")
        E = L_S.T @ D
        var = (self.log_sv.exp() - (A * A).sum(axis=0)
               + (E * E).sum(axis=0)).clip(MIN_VARIANCE, np.inf)
        return mean, var, self._kl_from_parts(L, L_S, v)

    # -- frozen fast path ------------------------------------------------------

    def freeze(self) -> "FrozenGP":
        return FrozenGP(self)

    # -- serialization -----------------------------------------------------------

    def to_fragment(self) -> dict:
        L_S = self.q_chol().data
        M = self.n_inducing
        packed = [float(L_S[i, j]) for i in range(M) for j in range(i + 1)]
        return {
            "kernel": {
                "log_signal_variance": float(self.log_sv.data),
                "log_lengthscales": [float(v) for v in self.log_ls.data],
            },
            "inducing_inputs": [[float(v) for v in row]
                                for row in self.Z.data],
            "q_mean": [float(v) for v in self.q_mean.data],
            "q_chol_lower_triangular": packed,
            "mean_function": float(self.mean_const.data),
        }

    @classmethod
    def from_fragment(cls, fragment: dict) -> "SparseGP":
        try:
            Z = np.array(fragment["inducing_inputs"], dtype=np.float64)
            kern = fragment["kernel"]
            log_sv = float(kern["log_signal_variance"])
            log_ls = np.array(kern["log_lengthscales"], dtype=np.float64)
            q_mean = np.array(fragment["q_mean"], dtype=np.float64)
            packed = list(fragment["q_chol_lower_triangular"])
            mean_function = float(fragment["mean_function"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolation(f"malformed GP fragment: {exc}") from exc
        M = Z.shape[0] if Z.ndim == 2 else 0
        if Z.ndim != 2 or q_mean.shape != (M,) or \
                len(packed) != M * (M + 1) // 2:
            raise ContractViolation("GP fragment has inconsistent shapes")
        gp = cls(Z, signal_variance=float(np.exp(log_sv)),
                 lengthscales=np.exp(log_ls), mean_function=mean_function)
        L_S = np.zeros((M, M))
        pos = 0
        for i in range(M):
            L_S[i, : i + 1] = packed[pos : pos + i + 1]
            pos += i + 1
        gp.set_posterior(q_mean, L_S)
        return gp


class FrozenGP:
    """A read-only snapshot of a SparseGP for prediction-heavy loops.

    All posterior algebra that does not depend on the test inputs is
    precomputed:

        alpha = Kuu^{-1} (m - mu0)
        C     = Kuu^{-1}
        B     = Kuu^{-1} L_S

    so ``predict`` is two Gram rows and three matrix products. Gradients
    flow only into the test inputs; the stored parameters are constants.
    """

    def __init__(self, gp: SparseGP):
        self.Z = gp.Z.data.copy()
        self.log_ls = gp.log_ls.data.copy()
        self.log_sv = float(gp.log_sv.data)
        self.sv = float(np.exp(self.log_sv))
        self.mu0 = float(gp.mean_const.data)
        Kuu = kernel_matrix(
            KernelParams(self.sv, np.exp(self.log_ls)), self.Z, self.Z)
        L, self.jitter = jittered_cholesky_np(Kuu, self.sv)
        L_S = gp.q_chol().data
        self.alpha = cho_solve((L, True), gp.q_mean.data - self.mu0)
        self.C = cho_solve((L, True), np.eye(len(L)))
        self.B = cho_solve((L, True), L_S)
        self._t_Z = Tensor(self.Z)
        self._t_log_ls = Tensor(self.log_ls)
        self._t_log_sv = Tensor(np.asarray(self.log_sv))
        self._t_alpha = Tensor(self.alpha)
        self._t_C = Tensor(self.C)
        self._t_B = Tensor(self.B)

    def predict(self, X: Tensor) -> tuple[Tensor, Tensor]:
        """Tape-tracked marginals; differentiable in ``X`` only."""
        Kxu = ard_kernel(X, self._t_Z, self._t_log_ls, self._t_log_sv)
        mean = self.mu0 + Kxu @ self._t_alpha
        q1 = ((Kxu @ self._t_C) * Kxu).sum(axis=1)
        q2 = ((Kxu @ self._t_B) ** 2).sum(axis=1)
        var = (self.sv - q1 + q2).clip(MIN_VARIANCE, np.inf)
        return mean, var

    def predict_np(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pure-numpy marginals for tape-free sweeps."""
        Kxu = accel.ard_sqexp(np.ascontiguousarray(X), self.Z,
                              np.exp(-self.log_ls), self.sv)
        mean = self.mu0 + Kxu @ self.alpha
        q1 = ((Kxu @ self.C) * Kxu).sum(axis=1)
        q2 = ((Kxu @ self.B) ** 2).sum(axis=1)
        var = np.clip(self.sv - q1 + q2, MIN_VARIANCE, np.inf)
        return mean, var
