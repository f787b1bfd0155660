import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from steadyprice import ScenarioTable

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def coin_toss() -> ScenarioTable:
    """Two-outcome table: one unit rented on heads, nothing on tails."""
    return ScenarioTable(
        demands=[[1.0], [0.0]],
        mass=[0.5, 0.5],
        starting_price=[1.0, 1.0],
        revenue=[3.0, 0.0],
    )


@pytest.fixture
def three_row() -> ScenarioTable:
    return ScenarioTable(
        demands=[[1.0], [2.0], [3.0]],
        mass=[0.25, 0.25, 0.5],
        starting_price=[2.0, 2.0, 2.0],
        revenue=[10.0, 4.0, 1.0],
    )


@pytest.fixture
def write_csv(tmp_path):
    """Write CSV text to a temp file and return its path."""
    counter = {"n": 0}

    def _write(text: str, name: str | None = None) -> str:
        counter["n"] += 1
        target = tmp_path / (name or f"table_{counter['n']}.csv")
        target.write_text(text, encoding="utf-8")
        return str(target)

    return _write


COIN_CSV = "r_1,f,q,v\n1,0.5,1,3\n0,0.5,1,0\n"


@pytest.fixture
def coin_csv(write_csv) -> str:
    return write_csv(COIN_CSV, "coin.csv")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260814)
