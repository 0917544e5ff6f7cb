import numpy as np
import pytest

from qns.linalg import rng_stream


@pytest.fixture
def rng():
    return rng_stream(20240817, 0)


def rand_psd(rng: np.random.Generator, n: int, scale: float = 1.0, rank: int | None = None):
    b = rng.standard_normal((n, rank or n))
    return scale * (b @ b.T) / n
