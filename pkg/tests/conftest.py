import math
import random

import pytest

from capacore.geometry import Point


def rand_points(rng: random.Random, n: int, Delta: int, d: int = 2,
                tagged: bool = True):
    return [
        Point(tuple(rng.randint(1, Delta) for _ in range(d)),
              i if tagged else -1)
        for i in range(n)
    ]


def clustered_points(rng: random.Random, n: int, Delta: int, d: int = 2,
                     clusters: int = 2, spread: float = 1.0):
    margin = max(1, min(Delta // 4, math.ceil(2 * spread)))
    means = [tuple(rng.randint(1 + margin, Delta - margin) for _ in range(d))
             for _ in range(clusters)]
    pts = []
    for i in range(n):
        mean = means[i % clusters]
        coords = tuple(min(Delta, max(1, round(rng.gauss(m, spread))))
                       for m in mean)
        pts.append(Point(coords, i))
    return pts


@pytest.fixture
def rng():
    return random.Random(12345)
