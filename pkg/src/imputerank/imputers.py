"""Reference imputation algorithms behind one interface.

A1 mode/mean (column marginals), A2 mixture of product multinomials fit by
EM, A3 k-nearest neighbors with Hamming distance, A4 chained-equation
sampling with per-column logistic predictors, and A5 the exact synthetic
ground-truth sampler. All fit on fully observed rows only and never see a
row's masked values at imputation time: ``impute`` receives only the
observed entries.
"""

from __future__ import annotations

import abc
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from sklearn.linear_model import LogisticRegression

from .data import Dataset, GroundTruth, MissingPattern, complete_rows_matrix
from .errors import ContractError, InsufficientDataError, TrainingDivergedError, UnsupportedError
from .metrics import SampleSet


def _draw_rows(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of a (n, card) probability matrix."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    return np.minimum((u[:, None] > cdf).sum(axis=1), probs.shape[1] - 1)


class Imputer(abc.ABC):
    """fit() on complete training rows, then impute() rows independently."""

    name: str = "imputer"

    @abc.abstractmethod
    def fit(self, data: Dataset, rows: Sequence[int]) -> "Imputer":
        """Learn from the fully observed rows of ``data`` listed in ``rows``."""

    @abc.abstractmethod
    def impute(
        self,
        observed: Sequence[int],
        pattern: MissingPattern,
        num_samples: int,
        seed: int,
    ) -> SampleSet:
        """Draw ``num_samples`` completions of the missing columns.

        ``observed`` aligns with ``pattern.observed``; the true values of the
        missing columns are never provided.
        """

    def _require_fitted(self):
        if getattr(self, "_cards", None) is None:
            raise ContractError(f"{self.name}: impute called before fit")

    def _sample_set(self, pattern: MissingPattern, samples: np.ndarray) -> SampleSet:
        cards = tuple(self._cards[k] for k in pattern.missing)
        return SampleSet(pattern=pattern, samples=samples, cards=cards)


class ModeMeanImputer(Imputer):
    """Samples each missing column independently from its marginal."""

    name = "mode_mean"

    def __init__(self):
        self._cards = None
        self._marginals = None

    def fit(self, data: Dataset, rows: Sequence[int]) -> "ModeMeanImputer":
        train = complete_rows_matrix(data, rows)
        self._cards = data.cardinalities
        self._marginals = []
        for k, card in enumerate(self._cards):
            counts = np.bincount(train[:, k], minlength=card).astype(float)
            if counts.sum() == 0:
                raise InsufficientDataError(f"column {k} has no observed values")
            self._marginals.append(counts / counts.sum())
        return self

    def impute(self, observed, pattern, num_samples, seed) -> SampleSet:
        self._require_fitted()
        rng = np.random.default_rng(seed)
        samples = np.empty((num_samples, len(pattern.missing)), dtype=np.int64)
        for j, k in enumerate(pattern.missing):
            probs = np.tile(self._marginals[k], (num_samples, 1))
            samples[:, j] = _draw_rows(rng, probs)
        return self._sample_set(pattern, samples)


class MixtureImputer(Imputer):
    """Mixture of product multinomials fit by EM on complete rows.

    Imputation draws a component from its posterior given the observed
    values, then samples each missing column from that component.
    """

    name = "mixture"

    def __init__(self, num_components: int = 5, em_iters: int = 100, seed: int = 0, restarts: int = 3):
        if num_components < 1 or em_iters < 1 or restarts < 1:
            raise ContractError("invalid mixture configuration")
        self.num_components = num_components
        self.em_iters = em_iters
        self.seed = seed
        self.restarts = restarts
        self._cards = None
        self.weights = None
        self.probs = None  # per column: (num_components, card)
        self.log_likelihoods = None

    def _log_resp(self, train, weights, probs):
        ll = np.tile(np.log(weights), (len(train), 1))
        for k in range(train.shape[1]):
            ll += np.log(probs[k][:, train[:, k]]).T
        return ll

    def _em_once(self, train, rng):
        n, d = train.shape
        C = self.num_components
        marginals = [
            np.bincount(train[:, k], minlength=self._cards[k]).astype(float) / n for k in range(d)
        ]
        weights = np.full(C, 1.0 / C)
        probs = []
        for k in range(d):
            noise = rng.dirichlet(np.ones(self._cards[k]), size=C)
            theta = 0.5 * marginals[k][None, :] + 0.5 * noise
            probs.append(theta / theta.sum(axis=1, keepdims=True))
        history = []
        for _ in range(self.em_iters):
            ll = self._log_resp(train, weights, probs)
            row_norm = logsumexp(ll, axis=1)
            loglik = float(row_norm.sum())
            if history and loglik < history[-1] - 1e-9:
                raise TrainingDivergedError("EM log-likelihood decreased")
            resp = np.exp(ll - row_norm[:, None])
            nc = resp.sum(axis=0)
            weights = np.maximum(nc, 1e-12)
            weights /= weights.sum()
            new_probs = []
            for k in range(d):
                onehot = np.eye(self._cards[k])[train[:, k]]
                theta = resp.T @ onehot
                theta = np.maximum(theta, 1e-15)
                new_probs.append(theta / theta.sum(axis=1, keepdims=True))
            probs = new_probs
            if history and loglik - history[-1] < 1e-10:
                history.append(loglik)
                break
            history.append(loglik)
        return weights, probs, history

    def fit(self, data: Dataset, rows: Sequence[int]) -> "MixtureImputer":
        train = complete_rows_matrix(data, rows)
        self._cards = data.cardinalities
        rng = np.random.default_rng(self.seed)
        best = None
        for _ in range(self.restarts):
            weights, probs, history = self._em_once(train, rng)
            if best is None or history[-1] > best[2][-1]:
                best = (weights, probs, history)
        self.weights, self.probs, self.log_likelihoods = best
        return self

    def impute(self, observed, pattern, num_samples, seed) -> SampleSet:
        self._require_fitted()
        rng = np.random.default_rng(seed)
        log_post = np.log(self.weights)
        for k, v in zip(pattern.observed, observed):
            log_post += np.log(self.probs[k][:, int(v)])
        log_post -= logsumexp(log_post)
        post = np.exp(log_post)
        post /= post.sum()
        comps = _draw_rows(rng, np.tile(post, (num_samples, 1)))
        samples = np.empty((num_samples, len(pattern.missing)), dtype=np.int64)
        for j, k in enumerate(pattern.missing):
            samples[:, j] = _draw_rows(rng, self.probs[k][comps])
        return self._sample_set(pattern, samples)


class KnnImputer(Imputer):
    """Samples missing columns from the k nearest complete rows.

    Distance is the Hamming distance on the observed columns; ties are
    broken by training row index.
    """

    name = "knn"

    def __init__(self, k: int = 10):
        if k < 1:
            raise ContractError("k must be >= 1")
        self.k = k
        self._cards = None
        self._train = None

    def fit(self, data: Dataset, rows: Sequence[int]) -> "KnnImputer":
        train = complete_rows_matrix(data, rows)
        if len(train) < self.k:
            raise InsufficientDataError(
                f"k={self.k} exceeds the {len(train)} complete training rows"
            )
        self._cards = data.cardinalities
        self._train = train
        return self

    def impute(self, observed, pattern, num_samples, seed) -> SampleSet:
        self._require_fitted()
        rng = np.random.default_rng(seed)
        obs_cols = list(pattern.observed)
        observed = np.asarray(observed, dtype=np.int64)
        distances = (self._train[:, obs_cols] != observed[None, :]).sum(axis=1)
        neighbors = self._train[np.argsort(distances, kind="stable")[: self.k]]
        samples = np.empty((num_samples, len(pattern.missing)), dtype=np.int64)
        for j, k in enumerate(pattern.missing):
            picks = rng.integers(0, self.k, size=num_samples)
            samples[:, j] = neighbors[picks, k]
        return self._sample_set(pattern, samples)


class _ColumnPredictor:
    """Multinomial logistic model of one column given one-hot others."""

    def __init__(self, card: int):
        self.card = card
        self.constant: Optional[int] = None
        self.model: Optional[LogisticRegression] = None

    def fit(self, features: np.ndarray, target: np.ndarray) -> "_ColumnPredictor":
        levels = np.unique(target)
        if len(levels) == 1:
            self.constant = int(levels[0])
            return self
        self.model = LogisticRegression(C=1.0, max_iter=1000)
        self.model.fit(features, target)
        if not np.all(np.isfinite(self.model.coef_)):
            raise TrainingDivergedError("non-finite predictor weights")
        return self

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        n = features.shape[0]
        out = np.zeros((n, self.card))
        if self.constant is not None:
            out[:, self.constant] = 1.0
            return out
        proba = self.model.predict_proba(features)
        out[:, self.model.classes_.astype(int)] = proba
        return out


class MiceImputer(Imputer):
    """Chained-equation sampler with per-column logistic predictors.

    Predictors are fit once on the complete training rows. Each imputation
    sample is its own chain: missing entries start at draws from the column
    marginals, then each sweep revisits the missing columns in index order
    and re-draws them from the predictive distribution given everything else.
    """

    name = "mice"

    def __init__(self, sweeps: int = 5, seed: int = 0):
        if sweeps < 1:
            raise ContractError("sweeps must be >= 1")
        self.sweeps = sweeps
        self.seed = seed
        self._cards = None
        self._marginals = None
        self._predictors = None

    def _features(self, cells: np.ndarray, exclude: int) -> np.ndarray:
        blocks = [
            np.eye(self._cards[j])[cells[:, j]]
            for j in range(len(self._cards))
            if j != exclude
        ]
        return np.hstack(blocks)

    def fit(self, data: Dataset, rows: Sequence[int]) -> "MiceImputer":
        train = complete_rows_matrix(data, rows)
        self._cards = data.cardinalities
        n = len(train)
        self._marginals = [
            np.bincount(train[:, k], minlength=self._cards[k]).astype(float) / n
            for k in range(data.num_cols)
        ]
        self._predictors = [
            _ColumnPredictor(self._cards[k]).fit(self._features(train, k), train[:, k])
            for k in range(data.num_cols)
        ]
        return self

    def impute(self, observed, pattern, num_samples, seed) -> SampleSet:
        self._require_fitted()
        rng = np.random.default_rng(seed)
        d = len(self._cards)
        state = np.zeros((num_samples, d), dtype=np.int64)
        state[:, list(pattern.observed)] = np.asarray(observed, dtype=np.int64)[None, :]
        for k in pattern.missing:
            probs = np.tile(self._marginals[k], (num_samples, 1))
            state[:, k] = _draw_rows(rng, probs)
        for _ in range(self.sweeps):
            for k in pattern.missing:
                probs = self._predictors[k].predict_proba(self._features(state, k))
                state[:, k] = _draw_rows(rng, probs)
        return self._sample_set(pattern, state[:, list(pattern.missing)])


class TrueSamplerImputer(Imputer):
    """Exact conditional sampler of the synthetic ground truth (A5)."""

    name = "true_sampler"

    def __init__(self, truth: Optional[GroundTruth]):
        if truth is None:
            raise UnsupportedError("true sampler requires a synthetic ground truth")
        self.truth = truth
        self._cards = tuple(truth.spec.cardinalities)

    def fit(self, data: Dataset, rows: Sequence[int]) -> "TrueSamplerImputer":
        if data.cardinalities != self._cards:
            raise ContractError("dataset does not match the ground truth")
        return self

    def impute(self, observed, pattern, num_samples, seed) -> SampleSet:
        rng = np.random.default_rng(seed)
        samples = self.truth.sample_conditional(pattern, observed, num_samples, rng)
        return self._sample_set(pattern, samples)


def mode_mean_imputer() -> ModeMeanImputer:
    return ModeMeanImputer()


def mixture_imputer(num_components: int = 5, em_iters: int = 100, seed: int = 0) -> MixtureImputer:
    return MixtureImputer(num_components=num_components, em_iters=em_iters, seed=seed)


def knn_imputer(k: int = 10) -> KnnImputer:
    return KnnImputer(k=k)


def mice_imputer(sweeps: int = 5, seed: int = 0) -> MiceImputer:
    return MiceImputer(sweeps=sweeps, seed=seed)


def true_sampler_imputer(truth: GroundTruth) -> TrueSamplerImputer:
    return TrueSamplerImputer(truth)


def build_imputer(kind: str, params: dict, truth: Optional[GroundTruth] = None) -> Imputer:
    """Instantiate an imputer from a config entry."""
    if kind == "mode_mean":
        return ModeMeanImputer()
    if kind == "mixture":
        return MixtureImputer(**params)
    if kind == "knn":
        return KnnImputer(**params)
    if kind == "mice":
        return MiceImputer(**params)
    if kind == "true_sampler":
        return TrueSamplerImputer(truth)
    raise ContractError(f"unknown imputer type {kind!r}")
