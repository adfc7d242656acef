import numpy as np
import pytest

from mtctrl import StateSpace


def random_stable(rng, n, m=1, p=1, margin=0.3):
    """Generic Hurwitz system: shifted Gaussian A, Gaussian B and C."""
    A = rng.standard_normal((n, n))
    shift = np.max(np.linalg.eigvals(A).real) + margin + rng.uniform(0.0, 1.0)
    A = A - shift * np.eye(n)
    return StateSpace(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
