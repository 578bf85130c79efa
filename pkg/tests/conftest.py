from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from portsel import Instance

DATA_DIR = Path(__file__).resolve().parents[1] / "data"


def make_instance(
    n: int,
    seed: int,
    *,
    max_assets: int = 10,
    min_frac: float = 0.01,
    max_frac: float = 1.0,
) -> Instance:
    """Random one-factor market: cov = (beta beta^T off-diag, 1 diag) * sd sd^T."""
    rng = np.random.default_rng(seed)
    beta = rng.uniform(0.3, 0.95, n)
    sd = rng.uniform(0.02, 0.10, n)
    corr = np.outer(beta, beta)
    np.fill_diagonal(corr, 1.0)
    cov = corr * np.outer(sd, sd)
    returns = rng.uniform(0.0, 0.01, n)
    return Instance(
        returns=returns,
        cov=cov,
        min_frac=np.full(n, min_frac),
        max_frac=np.full(n, max_frac),
        max_assets=min(max_assets, n),
    )


@pytest.fixture(scope="session")
def inst20() -> Instance:
    return make_instance(20, seed=42)


@pytest.fixture(scope="session")
def inst98() -> Instance:
    return make_instance(98, seed=4)
