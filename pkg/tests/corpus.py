"""Shared scenario builders for the test suite."""

import numpy as np

from transportkit import ConnectionChart


def random_connection(seed, rank=2, skew=False):
    rng = np.random.default_rng(seed)

    def entry():
        a, b, c, d = np.round(rng.uniform(-1, 1, 4), 3)
        return f"{a} + {b}*x + {c}*sin(y) + {d}*x*y"

    ax = [[entry() for _ in range(rank)] for _ in range(rank)]
    ay = [[entry() for _ in range(rank)] for _ in range(rank)]
    if skew:
        for A in (ax, ay):
            for i in range(rank):
                A[i][i] = "0"
                for j in range(i):
                    A[i][j] = f"-({A[j][i]})"
    return ConnectionChart(ax, ay)
