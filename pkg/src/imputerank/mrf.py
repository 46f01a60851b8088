"""Conditional pairwise MRF reference models.

A model scores an assignment of the missing columns by summing unary weights
over missing columns and pairwise weights over column pairs with at least one
missing endpoint; sampling and training only ever touch per-site conditional
distributions, so the partition function is never evaluated.

Two variants: a per-pattern model restricted to one missing pattern, and a
single model over all columns usable with any pattern.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, MissingPattern, PatternCatalog, complete_rows_matrix
from .errors import ContractError, TrainingDivergedError
from .metrics import SampleSet


@dataclass(frozen=True)
class TrainConfig:
    l2: float = 1e-2
    step: float = 1.0
    max_iters: int = 500
    tol: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.l2 < 0 or self.step <= 0 or self.max_iters < 1 or self.tol <= 0:
            raise ContractError("invalid training configuration")


@dataclass(frozen=True)
class GibbsConfig:
    burn_in: int = 100
    thin: int = 10
    num_samples: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1 or self.num_samples < 1:
            raise ContractError("invalid Gibbs configuration")


class MrfParams:
    """Trained weights of one conditional MRF.

    ``pattern`` is the missing pattern a per-pattern model was trained for,
    or None for the single model. ``unary[k]`` is a weight vector over column
    k's levels; ``pairwise[(k, k')]`` (k < k') is a weight matrix indexed
    [level_k, level_k'].
    """

    def __init__(self, cards, unary, pairwise, pattern: Optional[MissingPattern]):
        self.cards = tuple(int(c) for c in cards)
        self.pattern = pattern
        self.unary = {int(k): np.asarray(v, dtype=float).copy() for k, v in unary.items()}
        self.pairwise = {
            (int(a), int(b)): np.asarray(m, dtype=float).copy()
            for (a, b), m in pairwise.items()
        }
        for (a, b), m in self.pairwise.items():
            if not a < b:
                raise ContractError(f"pairwise key ({a},{b}) not canonically ordered")
            if m.shape != (self.cards[a], self.cards[b]):
                raise ContractError(f"pairwise ({a},{b}) has shape {m.shape}")
        for k, v in self.unary.items():
            if v.shape != (self.cards[k],):
                raise ContractError(f"unary {k} has shape {v.shape}")
        for arr in [*self.unary.values(), *self.pairwise.values()]:
            if not np.all(np.isfinite(arr)):
                raise ContractError("non-finite weight")
            arr.setflags(write=False)

    @property
    def is_single_model(self) -> bool:
        return self.pattern is None

    @property
    def target_columns(self) -> tuple[int, ...]:
        if self.pattern is None:
            return tuple(range(len(self.cards)))
        return self.pattern.missing

    def neighbors_of(self, k: int) -> list[int]:
        if self.pattern is None:
            return [j for j in range(len(self.cards)) if j != k]
        return sorted(
            {a for (a, b) in self.pairwise if b == k} | {b for (a, b) in self.pairwise if a == k}
        )

    def to_json(self) -> dict:
        return {
            "scope": "single" if self.pattern is None else "per_pattern",
            "pattern": None
            if self.pattern is None
            else {"missing": list(self.pattern.missing), "observed": list(self.pattern.observed)},
            "cards": list(self.cards),
            "unary": {str(k): v.tolist() for k, v in sorted(self.unary.items())},
            "pairwise": {f"{a},{b}": m.tolist() for (a, b), m in sorted(self.pairwise.items())},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MrfParams":
        pattern = None
        if doc["scope"] == "per_pattern":
            pattern = MissingPattern(
                missing=tuple(doc["pattern"]["missing"]),
                observed=tuple(doc["pattern"]["observed"]),
            )
        unary = {int(k): np.array(v, dtype=float) for k, v in doc["unary"].items()}
        pairwise = {
            tuple(int(x) for x in key.split(",")): np.array(m, dtype=float)
            for key, m in doc["pairwise"].items()
        }
        return cls(doc["cards"], unary, pairwise, pattern)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "MrfParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _site_scores(params: MrfParams, row_values: np.ndarray, k: int) -> np.ndarray:
    """Unnormalized log-probabilities of column k's levels given its neighbors."""
    scores = np.array(params.unary.get(k, np.zeros(params.cards[k])), dtype=float, copy=True)
    for j in params.neighbors_of(k):
        v = int(row_values[j])
        if not 0 <= v < params.cards[j]:
            raise ContractError(f"neighbor column {j} is unassigned or out of range")
        if j > k:
            scores += params.pairwise[(k, j)][:, v]
        else:
            scores += params.pairwise[(j, k)][v, :]
    return scores


def conditional_distribution(params: MrfParams, row_values: Sequence[int], k: int) -> np.ndarray:
    """P(y_k | all neighbor values) as a probability vector over column k's levels.

    ``row_values`` is a full-length assignment; the entry at k itself is
    ignored, every neighbor entry must be a valid level.
    """
    if k not in params.target_columns:
        raise ContractError(f"column {k} is not in the model's missing scope")
    row_values = np.asarray(row_values, dtype=np.int64)
    if row_values.shape != (len(params.cards),):
        raise ContractError("row_values must assign every column")
    scores = _site_scores(params, row_values, k)
    scores -= scores.max()
    p = np.exp(scores)
    return p / p.sum()


class PseudoLikelihoodProblem:
    """L2-regularized pseudo-likelihood of a pairwise model on complete rows.

    Objective (to maximize):
        sum_i sum_{k in targets} log P(y_ik | y_i,-k) - (l2/2) ||theta||^2

    Parameters are packed into a flat vector in a fixed order so the
    optimizer and the finite-difference checks share one interface.
    """

    def __init__(self, rows: np.ndarray, cards, targets, edges, l2: float):
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cards = tuple(cards)
        self.targets = tuple(sorted(targets))
        self.edges = tuple(sorted(tuple(sorted(e)) for e in edges))
        self.l2 = float(l2)
        self._slices = {}
        offset = 0
        for k in self.targets:
            self._slices[("u", k)] = slice(offset, offset + self.cards[k])
            offset += self.cards[k]
        for a, b in self.edges:
            size = self.cards[a] * self.cards[b]
            self._slices[("w", a, b)] = slice(offset, offset + size)
            offset += size
        self.num_params = offset
        # site -> [(neighbor, edge key, neighbor_is_second_index)]
        self._site_neighbors = {k: [] for k in self.targets}
        for a, b in self.edges:
            if a in self._site_neighbors:
                self._site_neighbors[a].append((b, (a, b), True))
            if b in self._site_neighbors:
                self._site_neighbors[b].append((a, (a, b), False))
        self._onehots = {}
        for k in range(len(self.cards)):
            self._onehots[k] = np.eye(self.cards[k])[self.rows[:, k]] if len(self.rows) else np.zeros((0, self.cards[k]))

    def unpack(self, vec: np.ndarray):
        unary = {k: vec[self._slices[("u", k)]] for k in self.targets}
        pairwise = {
            (a, b): vec[self._slices[("w", a, b)]].reshape(self.cards[a], self.cards[b])
            for a, b in self.edges
        }
        return unary, pairwise

    def pack(self, unary, pairwise) -> np.ndarray:
        vec = np.zeros(self.num_params)
        for k in self.targets:
            vec[self._slices[("u", k)]] = unary[k]
        for a, b in self.edges:
            vec[self._slices[("w", a, b)]] = np.asarray(pairwise[(a, b)]).ravel()
        return vec

    def _site_probs(self, unary, pairwise, k) -> np.ndarray:
        n = len(self.rows)
        scores = np.tile(unary[k], (n, 1))
        for j, edge, j_is_col in self._site_neighbors[k]:
            w = pairwise[edge]
            vals = self.rows[:, j]
            scores += w[:, vals].T if j_is_col else w[vals, :]
        scores -= scores.max(axis=1, keepdims=True)
        np.exp(scores, out=scores)
        return scores / scores.sum(axis=1, keepdims=True)

    def value(self, vec: np.ndarray) -> float:
        unary, pairwise = self.unpack(vec)
        n = len(self.rows)
        value = -0.5 * self.l2 * float(vec @ vec)
        for k in self.targets:
            probs = self._site_probs(unary, pairwise, k)
            picked = np.maximum(probs[np.arange(n), self.rows[:, k]], 1e-300)
            value += float(np.log(picked).sum())
        return value

    def value_and_grad(self, vec: np.ndarray) -> tuple[float, np.ndarray]:
        unary, pairwise = self.unpack(vec)
        n = len(self.rows)
        value = -0.5 * self.l2 * float(vec @ vec)
        grad = -self.l2 * vec
        for k in self.targets:
            probs = self._site_probs(unary, pairwise, k)
            picked = np.maximum(probs[np.arange(n), self.rows[:, k]], 1e-300)
            value += float(np.log(picked).sum())
            resid = self._onehots[k] - probs  # (n, card_k)
            grad[self._slices[("u", k)]] += resid.sum(axis=0)
            for j, edge, j_is_col in self._site_neighbors[k]:
                contrib = resid.T @ self._onehots[j]  # (card_k, card_j)
                if not j_is_col:
                    contrib = contrib.T
                grad[self._slices[("w", *edge)]] += contrib.ravel()
        return value, grad


def _ascend(problem: PseudoLikelihoodProblem, cfg: TrainConfig) -> np.ndarray:
    """Backtracking gradient ascent from zero; deterministic."""
    theta = np.zeros(problem.num_params)
    value, grad = problem.value_and_grad(theta)
    if not np.isfinite(value):
        raise TrainingDivergedError("objective non-finite at initialization")
    step = cfg.step
    for _ in range(cfg.max_iters):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= cfg.tol:
            break
        trial = step
        while True:
            candidate = theta + trial * grad
            cand_value = problem.value(candidate)
            # a non-finite trial value fails the test and shrinks the step
            if cand_value >= value + 1e-4 * trial * gnorm * gnorm:
                break
            trial *= 0.5
            if trial < 1e-16:
                # gradient direction yields no improvement at machine scale
                return theta
        theta = candidate
        value, grad = problem.value_and_grad(candidate)
        step = trial * 2.0
    return theta


def per_pattern_problem(
    data: Dataset, d_n: Sequence[int], pattern: MissingPattern, l2: float
) -> PseudoLikelihoodProblem:
    """Training problem for one pattern: targets are the missing columns,
    edges couple every missing-missing and missing-observed pair."""
    if pattern.num_cols != data.num_cols:
        raise ContractError("pattern dimensionality does not match the dataset")
    train = complete_rows_matrix(data, d_n)
    m = pattern.missing
    edges = sorted({(min(a, k), max(a, k)) for a in m for k in range(data.num_cols) if k != a})
    return PseudoLikelihoodProblem(train, data.cardinalities, m, edges, l2)


def single_model_problem(data: Dataset, d_n: Sequence[int], l2: float) -> PseudoLikelihoodProblem:
    """Training problem with every column a target and a complete graph."""
    train = complete_rows_matrix(data, d_n)
    d = data.num_cols
    edges = [(a, b) for a in range(d) for b in range(a + 1, d)]
    return PseudoLikelihoodProblem(train, data.cardinalities, range(d), edges, l2)


def train_per_pattern(
    data: Dataset, d_n: Sequence[int], pattern: MissingPattern, cfg: TrainConfig = TrainConfig()
) -> MrfParams:
    """Fit the conditional model for one missing pattern on complete rows.

    The graph couples every pair of missing columns and every
    missing-observed pair; observed-observed pairs are constants under the
    conditioning and carry no parameters.
    """
    problem = per_pattern_problem(data, d_n, pattern, cfg.l2)
    theta = _ascend(problem, cfg)
    unary, pairwise = problem.unpack(theta)
    return MrfParams(data.cardinalities, unary, pairwise, pattern)


def train_single_model(
    data: Dataset,
    d_n: Sequence[int],
    catalog: Optional[PatternCatalog] = None,
    cfg: TrainConfig = TrainConfig(),
) -> MrfParams:
    """Fit one model over all columns, usable with any missing pattern.

    Every column is a pseudo-likelihood prediction target, so pairwise
    parameters receive gradient from both endpoints and are shared across
    patterns at sampling time.
    """
    if catalog is not None:
        for pattern, _ in catalog.patterns:
            if pattern.num_cols != data.num_cols:
                raise ContractError("catalog pattern dimensionality mismatch")
    problem = single_model_problem(data, d_n, cfg.l2)
    theta = _ascend(problem, cfg)
    unary, pairwise = problem.unpack(theta)
    return MrfParams(data.cardinalities, unary, pairwise, None)


def _check_compatible(params: MrfParams, pattern: MissingPattern) -> None:
    if pattern.num_cols != len(params.cards):
        raise ContractError("pattern dimensionality does not match the model")
    if params.pattern is not None and params.pattern != pattern:
        raise ContractError("per-pattern model used with a different pattern")


def gibbs_sample(
    params: MrfParams,
    observed: Sequence[int],
    pattern: MissingPattern,
    cfg: GibbsConfig,
) -> SampleSet:
    """Draw ``cfg.num_samples`` assignments of the missing columns.

    The chain starts from per-column conditionals evaluated with observed
    columns at their values and missing neighbors at a draw from their unary
    softmax, runs ``burn_in`` full sweeps, then keeps one sample every
    ``thin`` sweeps. With a single missing column the kept samples are exact
    i.i.d. draws from the conditional.
    """
    _check_compatible(params, pattern)
    observed = np.asarray(observed, dtype=np.int64)
    if observed.shape != (len(pattern.observed),):
        raise ContractError("observed values must align with pattern.observed")
    for k, v in zip(pattern.observed, observed):
        if not 0 <= v < params.cards[k]:
            raise ContractError(f"observed value for column {k} out of range")

    rng = np.random.default_rng(cfg.seed)
    d = len(params.cards)
    missing = pattern.missing
    state = np.full(d, -1, dtype=np.int64)
    state[list(pattern.observed)] = observed

    # precomputed per-site tables: score contribution of neighbor j at value v
    # is table[k][j][:, v]
    tables = {}
    for k in missing:
        rowspec = []
        for j in params.neighbors_of(k):
            if j > k:
                rowspec.append((j, params.pairwise[(k, j)]))
            else:
                rowspec.append((j, params.pairwise[(j, k)].T))
        tables[k] = rowspec

    def draw(p: np.ndarray) -> int:
        return min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")), len(p) - 1)

    def softmax(scores: np.ndarray) -> np.ndarray:
        s = scores - scores.max()
        e = np.exp(s)
        return e / e.sum()

    unary_draws = np.full(d, -1, dtype=np.int64)
    for k in missing:
        unary_draws[k] = draw(softmax(params.unary.get(k, np.zeros(params.cards[k]))))
    for k in missing:
        scores = np.array(params.unary.get(k, np.zeros(params.cards[k])), copy=True)
        for j, table in tables[k]:
            v = state[j] if state[j] >= 0 else unary_draws[j]
            scores += table[:, v]
        state[k] = draw(softmax(scores))

    def sweep():
        for k in missing:
            scores = np.array(params.unary.get(k, np.zeros(params.cards[k])), copy=True)
            for j, table in tables[k]:
                scores += table[:, state[j]]
            state[k] = draw(softmax(scores))

    for _ in range(cfg.burn_in):
        sweep()
    samples = np.empty((cfg.num_samples, len(missing)), dtype=np.int64)
    for s in range(cfg.num_samples):
        for _ in range(cfg.thin):
            sweep()
        samples[s] = state[list(missing)]
    cards = tuple(params.cards[k] for k in missing)
    return SampleSet(pattern=pattern, samples=samples, cards=cards)
