"""Gaussian-process regression, the reproduction score, and UCB selection.

One exact GP with a squared-exponential kernel serves three roles:
the score surface over (skill, secondary pattern) inputs, and the
three per-dimension transition-residual models used by planning.
Episodes observe at most ~80 points, so the Cholesky refit is cheap.
"""
from __future__ import annotations

import logging
import math

import numpy as np

log = logging.getLogger(__name__)


def epsilon_score(bd_obs, bd_des, k: float = 4.0, c: float = 0.5,
                  denom_floor: float = 0.1) -> float:
    """Exp-decay score of how faithfully a skill was reproduced.

    1 at perfect reproduction, decaying with the descriptor error; the
    denominator 2*|bd_des| - c is floored because small-norm skills
    would otherwise make it non-positive.
    """
    bd_obs = np.asarray(bd_obs, dtype=np.float64)
    bd_des = np.asarray(bd_des, dtype=np.float64)
    err = float(np.linalg.norm(bd_obs - bd_des))
    denom = 2.0 * float(np.linalg.norm(bd_des)) - c
    if denom < denom_floor:
        log.debug("epsilon denominator %.4f clamped to %.4f", denom, denom_floor)
        denom = denom_floor
    return math.exp(-k * err / denom)


class GPModel:
    """Exact GP with squared-exponential kernel and optional prior mean."""

    def __init__(self, input_dim: int, lengthscale: float = 0.3,
                 signal_var: float = 1.0, noise_var: float = 1e-2,
                 prior_mean=None):
        self.input_dim = input_dim
        self.lengthscale = float(lengthscale)
        self.signal_var = float(signal_var)
        self.noise_var = float(noise_var)
        self.prior_mean = prior_mean or (lambda x: 0.0)
        self._x: list[np.ndarray] = []
        self._y: list[float] = []
        self._kinv = None
        self._alpha = None

    def __len__(self) -> int:
        return len(self._y)

    def update(self, x, y: float) -> "GPModel":
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.input_dim:
            raise ValueError(f"input dim {x.shape[0]} != {self.input_dim}")
        if not (np.all(np.isfinite(x)) and math.isfinite(y)):
            raise ValueError("non-finite observation")
        self._x.append(x)
        self._y.append(float(y))
        self._kinv = None
        return self

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        return self.signal_var * np.exp(-d2 / (2.0 * self.lengthscale ** 2))

    def _refit(self):
        x = np.vstack(self._x)
        k = self._kernel(x, x)
        jitter = 0.0
        for _ in range(6):
            try:
                chol = np.linalg.cholesky(k + (self.noise_var + jitter) * np.eye(len(x)))
                break
            except np.linalg.LinAlgError:
                jitter = 1e-9 if jitter == 0.0 else jitter * 10.0
        else:
            raise np.linalg.LinAlgError("kernel matrix not positive definite")
        linv = np.linalg.inv(chol)
        self._kinv = linv.T @ linv
        resid = np.array(self._y) - np.array([self.prior_mean(v) for v in self._x])
        self._alpha = self._kinv @ resid
        self._xmat = x

    def predict_many(self, xs) -> tuple[np.ndarray, np.ndarray]:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs[None, :]
        prior = np.array([self.prior_mean(v) for v in xs])
        if not self._y:
            return prior, np.full(len(xs), math.sqrt(self.signal_var))
        if self._kinv is None:
            self._refit()
        ks = self._kernel(xs, self._xmat)
        mean = prior + ks @ self._alpha
        var = self.signal_var - np.einsum("ij,jk,ik->i", ks, self._kinv, ks)
        var = np.clip(var, 0.0, self.signal_var)
        return mean, np.sqrt(var)

    def predict(self, x) -> tuple[float, float]:
        mean, std = self.predict_many(np.asarray(x, dtype=np.float64)[None, :])
        return float(mean[0]), float(std[0])


def gp_update(m: GPModel, x, y: float) -> GPModel:
    return m.update(x, y)


def gp_predict(m: GPModel, x) -> tuple[float, float]:
    return m.predict(x)


def ucb_select(m: GPModel, candidates, beta: float = 2.0, rng=None) -> int:
    """Index of the candidate maximizing mean + beta*std (ties: uniform)."""
    candidates = np.asarray(candidates, dtype=np.float64)
    if candidates.size == 0:
        raise ValueError("no candidates")
    if candidates.ndim == 1:
        candidates = candidates[None, :]
    mean, std = m.predict_many(candidates)
    scores = mean + beta * std
    best = scores.max()
    ties = np.flatnonzero(scores == best)
    if len(ties) == 1 or rng is None:
        return int(ties[0])
    return int(ties[rng.integers(len(ties))])


class TransitionModel:
    """Per-dimension residual GPs correcting repertoire predictions.

    The repertoire's recorded displacement acts as the prior mean: each
    GP is trained on observed-minus-recorded residuals (dx, dy, dyaw)
    with a zero prior, keyed by the skill's stored (x, y) descriptor.
    """

    def __init__(self, lengthscale: float = 0.3, signal_var: float = 1.0,
                 noise_var: float = 1e-2):
        self.gps = [GPModel(2, lengthscale, signal_var, noise_var)
                    for _ in range(3)]

    def update(self, skill_xy, residual):
        for gp, r in zip(self.gps, residual):
            gp.update(skill_xy, float(r))

    def correct_many(self, skill_xy_block: np.ndarray) -> np.ndarray:
        """Posterior-mean corrections for a block of skill descriptors."""
        out = np.zeros((len(skill_xy_block), 3))
        for j, gp in enumerate(self.gps):
            mean, _ = gp.predict_many(skill_xy_block)
            out[:, j] = mean
        return out
