"""Categorical datasets with missingness: CSV ingestion, MCAR injection,
missing-pattern extraction, and synthetic generation with exact conditionals.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, InsufficientDataError, ParseError, SchemaError

MISSING_TOKENS = ("", "NA")
CANONICAL_MISSING_TOKEN = "NA"


@dataclass(frozen=True)
class ColumnSpec:
    """One categorical column: its name, label-space size, and level tokens.

    ``levels[i]`` is the CSV token encoded as level index ``i``.
    """

    name: str
    cardinality: int
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.cardinality < 2:
            raise ContractError(f"column {self.name!r}: cardinality must be >= 2")
        if not self.levels:
            object.__setattr__(
                self, "levels", tuple(str(i) for i in range(self.cardinality))
            )
        if len(self.levels) != self.cardinality:
            raise ContractError(
                f"column {self.name!r}: {len(self.levels)} levels for "
                f"cardinality {self.cardinality}"
            )
        if len(set(self.levels)) != len(self.levels):
            raise ContractError(f"column {self.name!r}: duplicate level tokens")


class Dataset:
    """Immutable categorical table with a missingness mask.

    ``cells[i, k]`` holds the level index of row i in column k; it is only
    meaningful where ``mask[i, k]`` is False. Masked positions may hold any
    integer (e.g. the retained pre-injection value, or a poison sentinel) and
    must never be read by imputers.
    """

    def __init__(self, columns: Sequence[ColumnSpec], cells, mask):
        self.columns = tuple(columns)
        cells = np.asarray(cells, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
        if cells.ndim != 2 or mask.shape != cells.shape:
            raise ContractError("cells and mask must be 2-d arrays of equal shape")
        if cells.shape[1] != len(self.columns):
            raise ContractError(
                f"{cells.shape[1]} cell columns for {len(self.columns)} specs"
            )
        for k, col in enumerate(self.columns):
            observed = cells[~mask[:, k], k]
            if observed.size and (observed.min() < 0 or observed.max() >= col.cardinality):
                raise ContractError(
                    f"column {col.name!r}: observed level outside [0, {col.cardinality})"
                )
        cells = cells.copy()
        mask = mask.copy()
        cells.setflags(write=False)
        mask.setflags(write=False)
        self.cells = cells
        self.mask = mask

    @property
    def num_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def num_cols(self) -> int:
        return self.cells.shape[1]

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(c.cardinality for c in self.columns)

    def __repr__(self):
        return f"Dataset({self.num_rows}x{self.num_cols}, {int(self.mask.sum())} missing)"


@dataclass(frozen=True)
class MissingPattern:
    """A unique set of simultaneously missing column indices."""

    missing: tuple[int, ...]
    observed: tuple[int, ...]

    def __post_init__(self):
        if not self.missing:
            raise ContractError("a missing pattern must have at least one column")
        if tuple(sorted(self.missing)) != self.missing or tuple(sorted(self.observed)) != self.observed:
            raise ContractError("pattern index sets must be sorted")
        overlap = set(self.missing) & set(self.observed)
        if overlap:
            raise ContractError(f"missing and observed overlap: {sorted(overlap)}")

    @classmethod
    def from_mask(cls, mask_row: Iterable[bool]) -> "MissingPattern":
        mask_row = np.asarray(list(mask_row), dtype=bool)
        missing = tuple(int(i) for i in np.flatnonzero(mask_row))
        observed = tuple(int(i) for i in np.flatnonzero(~mask_row))
        return cls(missing=missing, observed=observed)

    @property
    def num_cols(self) -> int:
        return len(self.missing) + len(self.observed)


@dataclass(frozen=True)
class PatternCatalog:
    """The J unique missing patterns of D_M and their member rows."""

    patterns: tuple[tuple[MissingPattern, tuple[int, ...]], ...]

    @property
    def num_patterns(self) -> int:
        return len(self.patterns)

    def pattern_of_row(self, row: int) -> tuple[int, MissingPattern]:
        for j, (pattern, rows) in enumerate(self.patterns):
            if row in rows:
                return j, pattern
        raise KeyError(f"row {row} is not in the catalog")


@dataclass(frozen=True)
class SyntheticSpec:
    """Mixture of product multinomials used as a synthetic ground truth.

    ``components[c]`` is ``(prior_weight, per_column_probs)`` where
    ``per_column_probs[k]`` is a multinomial over column k's levels.
    """

    d: int
    cardinalities: tuple[int, ...]
    components: tuple[tuple[float, tuple[tuple[float, ...], ...]], ...]
    rows: int
    seed: int
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.d != len(self.cardinalities):
            raise ContractError("d must equal len(cardinalities)")
        if self.rows < 0:
            raise ContractError("rows must be >= 0")
        if not self.components:
            raise ContractError("at least one mixture component required")
        priors = [w for w, _ in self.components]
        if abs(sum(priors) - 1.0) > 1e-12 or min(priors) < 0:
            raise ContractError("component priors must be nonnegative and sum to 1")
        for w, cols in self.components:
            if len(cols) != self.d:
                raise ContractError("each component needs one multinomial per column")
            for k, probs in enumerate(cols):
                if len(probs) != self.cardinalities[k]:
                    raise ContractError(f"component multinomial arity mismatch at column {k}")
                if abs(sum(probs) - 1.0) > 1e-12 or min(probs) < 0:
                    raise ContractError(f"column {k} multinomial must sum to 1")
        if not self.column_names:
            object.__setattr__(
                self, "column_names", tuple(f"c{k}" for k in range(self.d))
            )

    @classmethod
    def from_json(cls, doc: dict) -> "SyntheticSpec":
        components = tuple(
            (float(comp["weight"]), tuple(tuple(float(p) for p in col) for col in comp["column_probs"]))
            for comp in doc["components"]
        )
        cards = tuple(int(c) for c in doc["cardinalities"])
        return cls(
            d=int(doc.get("d", len(cards))),
            cardinalities=cards,
            components=components,
            rows=int(doc["rows"]),
            seed=int(doc["seed"]),
            column_names=tuple(doc.get("column_names", ())),
        )

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "cardinalities": list(self.cardinalities),
            "components": [
                {"weight": w, "column_probs": [list(col) for col in cols]}
                for w, cols in self.components
            ],
            "rows": self.rows,
            "seed": self.seed,
            "column_names": list(self.column_names),
        }


class GroundTruth:
    """Exact conditionals of a mixture of product multinomials.

    Supports posterior-weighted conditional sampling P(Y_m | Y_o) and exact
    pointwise probability evaluation, which back the true-distribution
    imputer and the closed-form oracles in the tests.
    """

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.weights = np.array([w for w, _ in spec.components], dtype=float)
        # probs[k] has shape (num_components, cardinality_k)
        self.probs = [
            np.array([cols[k] for _, cols in spec.components], dtype=float)
            for k in range(spec.d)
        ]

    def component_posterior(self, observed_cols: Sequence[int], observed_vals: Sequence[int]) -> np.ndarray:
        """P(component | observed values); the prior when nothing is observed."""
        log_post = np.log(np.maximum(self.weights, 1e-300))
        for k, v in zip(observed_cols, observed_vals):
            log_post += np.log(np.maximum(self.probs[k][:, v], 1e-300))
        log_post -= log_post.max()
        post = np.exp(log_post)
        return post / post.sum()

    def sample_rows(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comps = rng.choice(len(self.weights), size=n, p=self.weights)
        out = np.empty((n, self.spec.d), dtype=np.int64)
        for k in range(self.spec.d):
            u = rng.random(n)
            cdf = np.cumsum(self.probs[k], axis=1)
            out[:, k] = (u[:, None] > cdf[comps]).sum(axis=1)
        return out

    def sample_conditional(
        self,
        pattern: MissingPattern,
        observed_vals: Sequence[int],
        num_samples: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Draw ``num_samples`` exact samples of Y_m given Y_o."""
        post = self.component_posterior(pattern.observed, observed_vals)
        comps = rng.choice(len(self.weights), size=num_samples, p=post)
        out = np.empty((num_samples, len(pattern.missing)), dtype=np.int64)
        for i, k in enumerate(pattern.missing):
            u = rng.random(num_samples)
            cdf = np.cumsum(self.probs[k], axis=1)
            out[:, i] = (u[:, None] > cdf[comps]).sum(axis=1)
        return out

    def conditional_prob(
        self,
        pattern: MissingPattern,
        observed_vals: Sequence[int],
        missing_vals: Sequence[int],
    ) -> float:
        """Exact P(Y_m = missing_vals | Y_o = observed_vals)."""
        post = self.component_posterior(pattern.observed, observed_vals)
        like = np.ones_like(post)
        for k, v in zip(pattern.missing, missing_vals):
            like *= self.probs[k][:, v]
        return float(np.dot(post, like))

    def conditional_marginal(
        self, column: int, observed_cols: Sequence[int], observed_vals: Sequence[int]
    ) -> np.ndarray:
        """Exact P(Y_column | observations) as a probability vector."""
        post = self.component_posterior(observed_cols, observed_vals)
        return post @ self.probs[column]


def complete_rows_matrix(data: Dataset, rows: Sequence[int]) -> np.ndarray:
    """Cells of the given rows, which must be fully observed."""
    rows = list(rows)
    if not rows:
        raise ContractError("at least one fully observed row is required")
    if data.mask[rows].any():
        raise ContractError("rows must be fully observed")
    return data.cells[rows]


def load_csv(path, schema: Optional[Sequence[ColumnSpec]] = None) -> Dataset:
    """Load a UTF-8, comma-separated, header-first CSV into a Dataset.

    Empty strings and "NA" are missing. Without a schema, level indices are
    assigned per column in first-appearance order and cardinality is the
    number of distinct observed tokens. With a schema, tokens must be among
    the declared levels.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    d = len(header)
    if schema is not None:
        if len(schema) != d:
            raise SchemaError(f"{path}: schema has {len(schema)} columns, file has {d}")
        token_maps = [{tok: i for i, tok in enumerate(col.levels)} for col in schema]
    else:
        token_maps = [{} for _ in range(d)]

    cells = np.zeros((len(rows), d), dtype=np.int64)
    mask = np.zeros((len(rows), d), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != d:
            raise ParseError(
                f"{path}: row {r + 2} has {len(row)} fields, expected {d}"
            )
        for k, token in enumerate(row):
            if token in MISSING_TOKENS:
                mask[r, k] = True
                continue
            if token not in token_maps[k]:
                if schema is not None:
                    raise SchemaError(
                        f"{path}: row {r + 2}, column {header[k]!r}: "
                        f"unknown token {token!r}"
                    )
                token_maps[k][token] = len(token_maps[k])
            cells[r, k] = token_maps[k][token]

    if schema is not None:
        columns = tuple(schema)
    else:
        columns = []
        for k, name in enumerate(header):
            levels = tuple(token_maps[k])
            if len(levels) < 2:
                raise ParseError(
                    f"{path}: column {name!r} has fewer than 2 observed levels"
                )
            columns.append(ColumnSpec(name=name, cardinality=len(levels), levels=levels))
        columns = tuple(columns)
    return Dataset(columns, cells, mask)


def write_csv(data: Dataset, path) -> None:
    """Write a Dataset back to CSV with "NA" as the canonical missing token."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in data.columns])
        for r in range(data.num_rows):
            row = [
                CANONICAL_MISSING_TOKEN
                if data.mask[r, k]
                else data.columns[k].levels[data.cells[r, k]]
                for k in range(data.num_cols)
            ]
            writer.writerow(row)


def inject_mcar(data: Dataset, rate: float, seed: int) -> Dataset:
    """Mask each cell independently with probability ``rate`` (MCAR).

    Cell values are retained under the mask so oracle checks can compare
    against the pre-injection truth; imputers must never read them.
    """
    if not 0.0 <= rate <= 0.5:
        raise ValueError(f"missing rate must be in [0, 0.5], got {rate}")
    if data.mask.any():
        raise ContractError("inject_mcar requires a dataset with no missing cells")
    rng = np.random.default_rng(seed)
    mask = rng.random(data.cells.shape) < rate
    return Dataset(data.columns, data.cells, mask)


def split_rows(data: Dataset) -> tuple[list[int], list[int]]:
    """Partition row indices into fully observed (D_N) and incomplete (D_M)."""
    complete = ~data.mask.any(axis=1)
    d_n = [int(i) for i in np.flatnonzero(complete)]
    d_m = [int(i) for i in np.flatnonzero(~complete)]
    if not d_n:
        raise InsufficientDataError(
            "no fully observed rows: a reference model cannot be trained"
        )
    return d_n, d_m


def extract_patterns(data: Dataset, rows: Sequence[int]) -> PatternCatalog:
    """Group the given incomplete rows by their unique missing pattern.

    Emits a warning for patterns whose training pool looks thin
    (fewer than 10 complete rows per missing column).
    """
    num_complete = int((~data.mask.any(axis=1)).sum())
    groups: dict[tuple[int, ...], list[int]] = {}
    order: list[tuple[int, ...]] = []
    for r in rows:
        missing = tuple(int(i) for i in np.flatnonzero(data.mask[r]))
        if not missing:
            raise ContractError(f"row {r} is fully observed")
        if missing not in groups:
            groups[missing] = []
            order.append(missing)
        groups[missing].append(int(r))

    patterns = []
    all_cols = set(range(data.num_cols))
    for missing in order:
        observed = tuple(sorted(all_cols - set(missing)))
        pattern = MissingPattern(missing=missing, observed=observed)
        if num_complete < 10 * len(missing):
            warnings.warn(
                f"pattern {missing}: only {num_complete} complete rows for "
                f"{len(missing)} missing columns; model may be under-trained",
                stacklevel=2,
            )
        patterns.append((pattern, tuple(groups[missing])))
    return PatternCatalog(patterns=tuple(patterns))


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, GroundTruth]:
    """Sample a fully observed Dataset i.i.d. from the mixture in ``spec``."""
    truth = GroundTruth(spec)
    rng = np.random.default_rng(spec.seed)
    cells = truth.sample_rows(spec.rows, rng)
    columns = tuple(
        ColumnSpec(name=spec.column_names[k], cardinality=spec.cardinalities[k])
        for k in range(spec.d)
    )
    mask = np.zeros((spec.rows, spec.d), dtype=bool)
    return Dataset(columns, cells, mask), truth


def load_synthetic_spec(path) -> SyntheticSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return SyntheticSpec.from_json(json.load(fh))
