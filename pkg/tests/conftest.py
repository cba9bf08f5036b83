import numpy as np
import pytest

from intreg.intervalgen import philox_stream


@pytest.fixture
def rng():
    """Deterministic generator for test randomness; independent of any
    stream the package itself uses."""
    return philox_stream(0xC0FFEE, 1000)


def random_interval_dataset(rng, n, d, spread=5.0):
    """Random features and intervals (built directly, not via the generator).
    Unrelated intervals: reduced intervals may legitimately come out empty."""
    from intreg.core import IntervalDataset

    xs = rng.standard_normal((n, d))
    centers = rng.uniform(-spread, spread, size=n)
    widths = rng.uniform(0.0, spread, size=n)
    p = rng.uniform(0.0, 1.0, size=n)
    lowers = centers - p * widths
    uppers = centers + (1.0 - p) * widths
    return IntervalDataset.from_arrays(xs, lowers, uppers, centers)


def lipschitz_interval_dataset(rng, n, d, lip=1.0, max_width=3.0):
    """Intervals around a lip-Lipschitz linear function, so any query has a
    nonempty reduced interval whenever m >= lip (the reduced interval always
    contains the underlying function's value)."""
    from intreg.core import IntervalDataset

    w = rng.standard_normal(d)
    w *= lip / np.linalg.norm(w)
    xs = rng.standard_normal((n, d))
    ys = xs @ w
    lowers = ys - rng.uniform(0.0, max_width, size=n)
    uppers = ys + rng.uniform(0.0, max_width, size=n)
    return IntervalDataset.from_arrays(xs, lowers, uppers, ys)
