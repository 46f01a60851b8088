"""Per-row discrepancy scores between a reference sample set and an imputer's.

Five metrics, all oriented lower-is-better after normalization: a kernel
KL-divergence estimate solved as a convex program, a symmetric divergence
proxy via binary classification, the unbiased squared MMD u-statistic, a
block-averaged MMD hypothesis test, and the neighborhood dissimilarity score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import StratifiedKFold

from .data import MissingPattern
from .errors import ContractError

METRICS = ("kl", "sym_kl", "mmd_score", "mmd_b_test", "nds")


class SampleSet:
    """L sampled assignments of one row's missing columns.

    ``samples[i, j]`` is the level of missing column ``pattern.missing[j]``
    in the i-th sample; ``cards[j]`` is that column's cardinality. One-hot
    encoding (length sum(cards)) is computed on demand and cached.
    """

    def __init__(self, pattern: MissingPattern, samples, cards):
        self.pattern = pattern
        self.cards = tuple(int(c) for c in cards)
        samples = np.asarray(samples, dtype=np.int64)
        if samples.ndim != 2 or samples.shape[1] != len(pattern.missing):
            raise ContractError("samples must be (L, |missing|)")
        if len(self.cards) != len(pattern.missing):
            raise ContractError("one cardinality per missing column required")
        for j, c in enumerate(self.cards):
            col = samples[:, j]
            if col.size and (col.min() < 0 or col.max() >= c):
                raise ContractError(f"sample level out of range for missing column {j}")
        samples = samples.copy()
        samples.setflags(write=False)
        self.samples = samples
        self._one_hot: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.samples.shape[0]

    def one_hot(self) -> np.ndarray:
        if self._one_hot is None:
            offsets = np.concatenate([[0], np.cumsum(self.cards[:-1])]).astype(np.int64)
            out = np.zeros((len(self), int(sum(self.cards))))
            idx = self.samples + offsets[None, :]
            out[np.arange(len(self))[:, None], idx] = 1.0
            out.setflags(write=False)
            self._one_hot = out
        return self._one_hot


@dataclass(frozen=True)
class KernelConfig:
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ContractError("sigma must be positive")


@dataclass(frozen=True)
class KlSolverConfig:
    """Solver settings for the KL convex program.

    ``lambda_L`` is the constant in the 1/(2*lambda_L*L) factor of the
    objective; None resolves to 0.1 * L**-1.5 at call time so the effective
    penalty on the sample-matching term decays as 0.1/sqrt(L).
    """

    lambda_L: Optional[float] = None
    max_iters: int = 5000
    tol: float = 1e-8
    alpha_floor: float = 1e-10

    def __post_init__(self):
        if self.lambda_L is not None and self.lambda_L <= 0:
            raise ContractError("lambda_L must be positive")
        if self.alpha_floor <= 0 or self.tol <= 0 or self.max_iters < 1:
            raise ContractError("invalid KL solver configuration")

    def resolve_lambda(self, num_samples: int) -> float:
        if self.lambda_L is not None:
            return self.lambda_L
        return 0.1 * num_samples**-1.5


@dataclass(frozen=True)
class NdsConfig:
    lam: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ContractError("lambda must be in (0, 1)")


@dataclass(frozen=True)
class MetricScore:
    metric: str
    value: float
    orientation: str = "lower"
    converged: bool = True

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ContractError(f"{self.metric}: non-finite score")


def gaussian_kernel(x, y, cfg: KernelConfig = KernelConfig()) -> float:
    """exp(-||x - y||^2 / sigma) for two equal-length real vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("kernel inputs must be equal-length vectors")
    d2 = float(np.sum((x - y) ** 2))
    return math.exp(-d2 / cfg.sigma)


def _gram(x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-cdist(x, y, "sqeuclidean") / sigma)


def _check_pair(ref: SampleSet, imp: SampleSet, equal_sizes: bool) -> None:
    if ref.cards != imp.cards or len(ref.pattern.missing) != len(imp.pattern.missing):
        raise ContractError("sample sets do not share a pattern arity")
    if equal_sizes and len(ref) != len(imp):
        raise ContractError(f"sample sets must be equal-sized ({len(ref)} vs {len(imp)})")


@dataclass(frozen=True)
class KlSolution:
    """Diagnostic output of the KL convex program."""

    alpha: np.ndarray
    value: float
    objective_trace: tuple[float, ...]
    converged: bool


def solve_kl_program(
    ref: SampleSet,
    imp: SampleSet,
    kcfg: KernelConfig = KernelConfig(),
    scfg: KlSolverConfig = KlSolverConfig(),
) -> KlSolution:
    """Solve the KL weight program by projected gradient descent.

    Objective over alpha >= alpha_floor:

        F(alpha) = -(1/L) sum_u log(L alpha_u) + (1/(2 lambda_L L)) g(alpha)

    where g is the squared RKHS distance between the alpha-weighted
    reference embedding and the mean imputer embedding,

        g = a'Kyy a - (2/L) a'Kyh 1 + (1/L^2) 1'Khh 1.

    The weights act as a per-reference-sample density ratio, so
    -(1/L) sum_u log(L alpha_u) at the solution estimates
    E_ref[log(p_ref/p_imp)].
    """
    _check_pair(ref, imp, equal_sizes=True)
    L = len(ref)
    if L < 1:
        raise ContractError("KL estimation needs at least one sample")
    x = ref.one_hot()
    y = imp.one_hot()
    kyy = _gram(x, x, kcfg.sigma)
    c = _gram(x, y, kcfg.sigma).sum(axis=1) / L
    const = float(_gram(y, y, kcfg.sigma).sum()) / L**2
    lam = scfg.resolve_lambda(L)
    quad_coef = 1.0 / (2.0 * lam * L)

    def value(alpha):
        g = float(alpha @ kyy @ alpha) - 2.0 * float(c @ alpha) + const
        return -np.log(L * alpha).sum() / L + quad_coef * g

    def grad(alpha):
        return -1.0 / (L * alpha) + 2.0 * quad_coef * (kyy @ alpha - c)

    alpha = np.full(L, 1.0 / L)
    f = value(alpha)
    trace = [f]
    step = 1.0 / max(2.0 * quad_coef * L, 1.0)
    converged = False
    for _ in range(scfg.max_iters):
        g = grad(alpha)
        trial = step
        while True:
            cand = np.maximum(alpha - trial * g, scfg.alpha_floor)
            move = cand - alpha
            f_cand = value(cand)
            if f_cand <= f + float(g @ move) + float(move @ move) / (2.0 * trial):
                break
            trial *= 0.5
            if trial < 1e-18:
                cand, f_cand, move = alpha, f, np.zeros_like(alpha)
                break
        alpha, f = cand, f_cand
        trace.append(f)
        if float(np.abs(move).max()) <= scfg.tol * max(trial, 1e-300):
            converged = True
            break
        step = trial * 2.0
    est = float(-np.log(L * alpha).sum() / L)
    return KlSolution(alpha=alpha, value=est, objective_trace=tuple(trace), converged=converged)


def kl_divergence(
    ref: SampleSet,
    imp: SampleSet,
    kcfg: KernelConfig = KernelConfig(),
    scfg: KlSolverConfig = KlSolverConfig(),
) -> MetricScore:
    """Kernel estimate of KL(reference || imputer); see solve_kl_program."""
    sol = solve_kl_program(ref, imp, kcfg, scfg)
    return MetricScore(metric="kl", value=sol.value, converged=sol.converged)


def symmetric_kl(ref: SampleSet, imp: SampleSet) -> MetricScore:
    """Classifier-based symmetric divergence proxy.

    Labels reference samples +1 and imputer samples -1, fits an
    L2-regularized logistic classifier on one-hot encodings, and scores
    1 - stratified-CV error. Identical distributions land near 0.5,
    disjoint ones near 1.
    """
    _check_pair(ref, imp, equal_sizes=False)
    if len(ref) < 2 or len(imp) < 2:
        raise ContractError("classification needs at least 2 samples per side")
    x = np.vstack([ref.one_hot(), imp.one_hot()])
    y = np.concatenate([np.ones(len(ref)), -np.ones(len(imp))])
    if len(np.unique(y)) < 2:
        raise ContractError("both classes must be present")
    n_splits = min(5, len(ref), len(imp))
    folds = StratifiedKFold(n_splits=n_splits, shuffle=False)
    errors = 0
    for train_idx, test_idx in folds.split(x, y):
        clf = LogisticRegression(C=1.0, solver="liblinear", max_iter=1000)
        clf.fit(x[train_idx], y[train_idx])
        errors += int((clf.predict(x[test_idx]) != y[test_idx]).sum())
    error_rate = errors / len(y)
    return MetricScore(metric="sym_kl", value=1.0 - error_rate)


def mmd_score(ref: SampleSet, imp: SampleSet, kcfg: KernelConfig = KernelConfig()) -> MetricScore:
    """Unbiased squared-MMD u-statistic; exactly 0 for identical sets."""
    _check_pair(ref, imp, equal_sizes=True)
    L = len(ref)
    if L < 2:
        raise ContractError("MMD u-statistic needs at least 2 samples")
    x = ref.one_hot()
    y = imp.one_hot()
    value = _mmd2_u(x, y, kcfg.sigma)
    return MetricScore(metric="mmd_score", value=value)


def _mmd2_u(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    L = x.shape[0]
    kyy = _gram(x, x, sigma)
    khh = _gram(y, y, sigma)
    kyh = _gram(x, y, sigma)
    off_yy = float(kyy.sum() - np.trace(kyy))
    off_hh = float(khh.sum() - np.trace(khh))
    off_yh = float(kyh.sum() - np.trace(kyh))
    return (off_yy + off_hh - 2.0 * off_yh) / (L * (L - 1))


def b_test(
    ref: SampleSet,
    imp: SampleSet,
    kcfg: KernelConfig = KernelConfig(),
    beta: float = 0.05,
) -> MetricScore:
    """Block-averaged MMD test of H0: the two distributions coincide.

    Splits the paired samples into floor(sqrt(L)) consecutive blocks,
    computes the MMD^2 u-statistic per block, and applies a one-sided
    Gaussian test to the block mean. Score 0 = H0 accepted (distributions
    indistinguishable, ranks best), 1 = rejected.
    """
    _check_pair(ref, imp, equal_sizes=True)
    L = len(ref)
    if L < 8:
        raise ContractError("B-test needs at least 8 paired samples")
    if not 0.0 < beta < 1.0:
        raise ContractError("beta must be in (0, 1)")
    num_blocks = int(math.isqrt(L))
    block = L // num_blocks
    x = ref.one_hot()
    y = imp.one_hot()
    vals = np.array(
        [
            _mmd2_u(x[b * block : (b + 1) * block], y[b * block : (b + 1) * block], kcfg.sigma)
            for b in range(num_blocks)
        ]
    )
    mean = float(vals.mean())
    se = float(vals.std(ddof=1)) / math.sqrt(num_blocks)
    if se == 0.0:
        reject = mean > 0.0
    else:
        reject = mean / se > norm.ppf(1.0 - beta)
    return MetricScore(metric="mmd_b_test", value=1.0 if reject else 0.0)


def nds(ref: SampleSet, imp: SampleSet, cfg: NdsConfig = NdsConfig()) -> MetricScore:
    """Neighborhood dissimilarity score: weighted cross-set Hamming average.

    nds = (1/(L_ref * L_imp)) sum_{u,v} w_uv h_uv with h the Hamming
    distance over the missing columns, h_max = |missing|, and
    w = lam**h + (1-lam)**(h_max - h). Sizes may differ.
    """
    if ref.pattern != imp.pattern:
        raise ContractError("sample sets come from different patterns")
    _check_pair(ref, imp, equal_sizes=False)
    if len(ref) < 1 or len(imp) < 1:
        raise ContractError("NDS needs at least one sample per side")
    h = (ref.samples[:, None, :] != imp.samples[None, :, :]).sum(axis=2)
    h_max = len(ref.pattern.missing)
    w = cfg.lam**h + (1.0 - cfg.lam) ** (h_max - h)
    value = float((w * h).sum()) / (len(ref) * len(imp))
    return MetricScore(metric="nds", value=value)


def compute_score(
    metric: str,
    ref: SampleSet,
    imp: SampleSet,
    *,
    kernel: KernelConfig = KernelConfig(),
    kl: KlSolverConfig = KlSolverConfig(),
    nds_cfg: NdsConfig = NdsConfig(),
    beta: float = 0.05,
) -> MetricScore:
    """Dispatch one of the five metrics by name."""
    if metric == "kl":
        return kl_divergence(ref, imp, kernel, kl)
    if metric == "sym_kl":
        return symmetric_kl(ref, imp)
    if metric == "mmd_score":
        return mmd_score(ref, imp, kernel)
    if metric == "mmd_b_test":
        return b_test(ref, imp, kernel, beta)
    if metric == "nds":
        return nds(ref, imp, nds_cfg)
    raise ContractError(f"unknown metric {metric!r}; expected one of {METRICS}")
