import random

WEIGHTS = [2.0, -1.0, 0.5]
BIAS = 0.3


def make_split(seed, n):
    rng = random.Random(seed)
    rows = []
    for _ in range(n):
        x = [rng.uniform(-1.0, 1.0) for _ in WEIGHTS]
        y = sum(w * v for w, v in zip(WEIGHTS, x)) + BIAS + rng.gauss(0.0, 0.1)
        rows.append((x, y))
    return rows
