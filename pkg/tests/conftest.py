import numpy as np
import pytest

from imputerank.data import ColumnSpec, Dataset, SyntheticSpec


def make_dataset(cells, cards=None, mask=None):
    """Dataset from a plain nested list; cardinalities inferred if omitted."""
    cells = np.asarray(cells, dtype=np.int64)
    if cards is None:
        cards = [max(2, int(cells[:, k].max()) + 1) for k in range(cells.shape[1])]
    if mask is None:
        mask = np.zeros_like(cells, dtype=bool)
    columns = [ColumnSpec(name=f"c{k}", cardinality=c) for k, c in enumerate(cards)]
    return Dataset(columns, cells, mask)


def peaked_component(levels, cards, peak=0.8):
    """Product multinomial putting ``peak`` mass on one level per column."""
    cols = []
    for lv, c in zip(levels, cards):
        p = np.full(c, (1.0 - peak) / (c - 1))
        p[lv] = peak
        cols.append(tuple(p))
    return tuple(cols)


def two_component_spec(rows=500, seed=7, cards=(2, 3, 2), peak=0.85):
    """Well-separated two-component mixture over small categorical columns."""
    comp_a = peaked_component([0] * len(cards), cards, peak)
    comp_b = peaked_component([c - 1 for c in cards], cards, peak)
    return SyntheticSpec(
        d=len(cards),
        cardinalities=tuple(cards),
        components=((0.5, comp_a), (0.5, comp_b)),
        rows=rows,
        seed=seed,
    )


@pytest.fixture
def copy_dataset():
    """Column B is a deterministic copy of column A."""
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, size=500)
    return make_dataset(np.stack([a, a], axis=1), cards=[2, 2])
