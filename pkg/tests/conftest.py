import numpy as np
import pytest

from evrecon.events import EventStream


def random_stream(rng: np.random.Generator, n: int | None = None, width: int = 16,
                  height: int = 12, t_max: int = 10_000) -> EventStream:
    if n is None:
        n = int(rng.integers(0, 200))
    return EventStream.sorted(
        width, height,
        rng.integers(0, width, n), rng.integers(0, height, n),
        rng.integers(0, t_max, n), rng.choice([-1, 1], n),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
