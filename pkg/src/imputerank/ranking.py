"""Rank aggregation with significance testing.

Per-row metric scores become average ranks (ties shared), the Friedman test
checks the all-equivalent null, and the Nemenyi critical difference decides
which average-rank gaps are significant. A Kendall-Tau diagnostic quantifies
how self-consistent a metric's rankings are under reference swaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2, rankdata

from .errors import ContractError, UnsupportedError
from .metrics import MetricScore, SampleSet, compute_score

# Two-tailed Nemenyi critical values q_beta for k = 2..10 compared groups.
_NEMENYI_Q = {
    0.05: {2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164},
    0.10: {2: 1.645, 3: 2.052, 4: 2.291, 5: 2.459, 6: 2.589, 7: 2.693, 8: 2.780, 9: 2.855, 10: 2.920},
}


@dataclass(frozen=True)
class RankMatrix:
    """Per-row average ranks of each algorithm under one metric."""

    metric: str
    algorithms: tuple[str, ...]
    ranks: np.ndarray  # (num_rows, num_algorithms)
    row_ids: tuple[int, ...]

    def __post_init__(self):
        k = len(self.algorithms)
        if self.ranks.ndim != 2 or self.ranks.shape[1] != k:
            raise ContractError("rank matrix shape does not match algorithms")
        if len(self.row_ids) != self.ranks.shape[0]:
            raise ContractError("one row id per rank row required")
        expected = k * (k + 1) / 2
        if self.ranks.size and not np.allclose(self.ranks.sum(axis=1), expected, atol=1e-9):
            raise ContractError("rank rows must sum to k(k+1)/2")


@dataclass(frozen=True)
class RankingResult:
    metric: str
    algorithms: tuple[str, ...]
    avg_ranks: tuple[float, ...]
    friedman_stat: float
    reject_null: bool
    cd: float
    beta: float
    significant_pairs: tuple[tuple[str, str], ...]

    def to_json(self) -> dict:
        return {
            "avg_ranks": {a: r for a, r in zip(self.algorithms, self.avg_ranks)},
            "friedman_stat": self.friedman_stat,
            "reject_null": self.reject_null,
            "cd": self.cd,
            "beta": self.beta,
            "significant_pairs": [list(p) for p in self.significant_pairs],
        }


def _score_value(s) -> float:
    return s.value if isinstance(s, MetricScore) else float(s)


def scores_to_ranks(
    rows: Sequence[Mapping[str, object]],
    algorithms: Sequence[str],
    metric: str = "",
    row_ids: Sequence[int] | None = None,
) -> RankMatrix:
    """Rank algorithms per row by ascending score (lower is better).

    Each entry of ``rows`` maps algorithm name to a score (MetricScore or
    float). Ties receive the average of the ranks they span.
    """
    algorithms = tuple(algorithms)
    if row_ids is None:
        row_ids = range(len(rows))
    ranks = np.zeros((len(rows), len(algorithms)))
    for i, row in enumerate(rows):
        missing = [a for a in algorithms if a not in row]
        if missing:
            raise ContractError(f"row {i}: no score for {missing}")
        values = np.array([_score_value(row[a]) for a in algorithms])
        ranks[i] = rankdata(values, method="average")
    return RankMatrix(metric=metric, algorithms=algorithms, ranks=ranks, row_ids=tuple(row_ids))


def friedman_test(rm: RankMatrix, beta: float = 0.05) -> tuple[float, bool]:
    """Friedman chi-square statistic and whether the null is rejected.

    chi2_F = 12N/(k(k+1)) * (sum_j Rbar_j^2 - k(k+1)^2/4), compared against
    the chi-square distribution with k-1 degrees of freedom.
    """
    n, k = rm.ranks.shape
    if n < 2 or k < 2:
        raise ContractError("Friedman test needs >= 2 rows and >= 2 algorithms")
    avg = rm.ranks.mean(axis=0)
    stat = 12.0 * n / (k * (k + 1)) * (float(np.sum(avg**2)) - k * (k + 1) ** 2 / 4.0)
    critical = float(chi2.ppf(1.0 - beta, df=k - 1))
    return stat, stat > critical


def nemenyi_cd(num_algorithms: int, num_rows: int, beta: float = 0.05) -> float:
    """Critical difference q_beta * sqrt(k(k+1)/(6N)) from the embedded table."""
    if beta not in _NEMENYI_Q:
        raise UnsupportedError(f"no critical values embedded for beta={beta}")
    table = _NEMENYI_Q[beta]
    if num_algorithms not in table:
        raise UnsupportedError(f"k={num_algorithms} outside embedded table range 2..10")
    if num_rows < 1:
        raise ContractError("need at least one row")
    k = num_algorithms
    return table[k] * np.sqrt(k * (k + 1) / (6.0 * num_rows))


def aggregate(rm: RankMatrix, beta: float = 0.05) -> RankingResult:
    """Average ranks, Friedman test, and Nemenyi-significant pairs.

    A pair is reported significant iff the Friedman null is rejected and its
    average-rank gap exceeds the critical difference.
    """
    n, k = rm.ranks.shape
    stat, reject = friedman_test(rm, beta)
    cd = nemenyi_cd(k, n, beta)
    avg = rm.ranks.mean(axis=0)
    pairs = []
    if reject:
        for i in range(k):
            for j in range(i + 1, k):
                if abs(avg[i] - avg[j]) > cd:
                    pairs.append((rm.algorithms[i], rm.algorithms[j]))
    return RankingResult(
        metric=rm.metric,
        algorithms=rm.algorithms,
        avg_ranks=tuple(float(r) for r in avg),
        friedman_stat=stat,
        reject_null=reject,
        cd=float(cd),
        beta=beta,
        significant_pairs=tuple(pairs),
    )


def kendall_tau_distance(a: Sequence[float], b: Sequence[float]) -> int:
    """Number of strictly discordant pairs between two rankings.

    Inputs are rank (or score) vectors over the same items; pairs tied in
    either vector are not discordant.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError("rankings must be equal-length vectors")
    count = 0
    for i in range(len(a)):
        for j in range(i + 1, len(a)):
            if (a[i] - a[j]) * (b[i] - b[j]) < 0:
                count += 1
    return count


def inconsistency_score(
    samplesets: Mapping[str, Sequence[SampleSet]],
    metric: str,
    beta: float = 0.05,
    **metric_kwargs,
) -> float:
    """Average Kendall-Tau self-inconsistency of a metric under reference swaps.

    Each algorithm in turn plays the true distribution: the remaining ones
    are ranked against its samples over all rows. For an ordered pair (i, j),
    the other algorithms are ordered once by their average-rank distance from
    j in i's ranking, and once by their average rank when j itself is the
    reference; the Kendall-Tau distance between those two orderings, averaged
    over all ordered pairs, is the inconsistency.
    """
    algorithms = list(samplesets)
    K = len(algorithms)
    if K < 3:
        raise ContractError("inconsistency needs at least 3 algorithms")
    lengths = {len(samplesets[a]) for a in algorithms}
    if len(lengths) != 1:
        raise ContractError("all algorithms must cover the same rows")
    num_rows = lengths.pop()

    avg_rank = {}  # reference -> {other -> average rank}
    for ref_alg in algorithms:
        others = [a for a in algorithms if a != ref_alg]
        rows = []
        for r in range(num_rows):
            ref = samplesets[ref_alg][r]
            rows.append(
                {a: compute_score(metric, ref, samplesets[a][r], beta=beta, **metric_kwargs) for a in others}
            )
        rm = scores_to_ranks(rows, others, metric=metric)
        avg_rank[ref_alg] = dict(zip(others, rm.ranks.mean(axis=0)))

    total = 0.0
    num_pairs = 0
    for i in algorithms:
        for j in algorithms:
            if i == j:
                continue
            rest = [a for a in algorithms if a not in (i, j)]
            by_distance = [abs(avg_rank[i][a] - avg_rank[i][j]) for a in rest]
            by_reference = [avg_rank[j][a] for a in rest]
            total += kendall_tau_distance(
                rankdata(by_distance, method="average"),
                rankdata(by_reference, method="average"),
            )
            num_pairs += 1
    return total / num_pairs
