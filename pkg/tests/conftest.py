import sys

import numpy as np
import pytest

from dpsynth import ColumnSpec, DiscreteDataset, Schema


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one verdict line per acceptance criterion, if that suite ran."""
    mod = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def toy_schema() -> Schema:
    return Schema(
        columns=(
            ColumnSpec("color", "categorical", categories=("A", "B", "C")),
            ColumnSpec("size", "categorical", categories=("S", "L")),
            ColumnSpec("label", "categorical", categories=("no", "yes"), is_label=True),
            ColumnSpec("x", "numerical", lower=0.0, upper=100.0),
            ColumnSpec("y", "numerical", lower=0.0, upper=1.0),
        )
    )


def planted_schema() -> Schema:
    """3 categorical columns (arities 2/3/4, the binary one is the label) + 3 numericals."""
    return Schema(
        columns=(
            ColumnSpec("lab", "categorical", categories=("n", "y"), is_label=True),
            ColumnSpec("c3", "categorical", categories=("a", "b", "c")),
            ColumnSpec("c4", "categorical", categories=("p", "q", "r", "s")),
            ColumnSpec("x0", "numerical", lower=0.0, upper=1.0),
            ColumnSpec("x1", "numerical", lower=0.0, upper=1.0),
            ColumnSpec("x2", "numerical", lower=0.0, upper=1.0),
        )
    )


def planted_dataset(n: int = 2000, seed: int = 0) -> DiscreteDataset:
    """Synthetic rows where the numerical columns strongly track the label."""
    schema = planted_schema()
    rng = np.random.default_rng(seed)
    lab = rng.integers(2, size=n)
    c3 = np.where(rng.random(n) < 0.8, lab % 3, rng.integers(3, size=n))
    c4 = np.where(rng.random(n) < 0.7, (lab * 2) % 4, rng.integers(4, size=n))
    num = np.stack(
        [
            np.clip(0.15 + 0.60 * lab + 0.05 * rng.standard_normal(n), 0, 1),
            np.clip(0.80 - 0.55 * lab + 0.05 * rng.standard_normal(n), 0, 1),
            np.clip(0.30 + 0.40 * lab + 0.06 * rng.standard_normal(n), 0, 1),
        ],
        axis=1,
    )
    return DiscreteDataset(schema=schema, cat=np.stack([lab, c3, c4], 1).astype(np.int64), num=num)


@pytest.fixture
def random_dataset(toy_schema) -> DiscreteDataset:
    rng = np.random.default_rng(42)
    n = 200
    return DiscreteDataset(
        schema=toy_schema,
        cat=np.stack(
            [rng.integers(3, size=n), rng.integers(2, size=n), rng.integers(2, size=n)], 1
        ).astype(np.int64),
        num=np.stack([rng.uniform(0, 100, n), rng.uniform(0, 1, n)], 1),
    )
