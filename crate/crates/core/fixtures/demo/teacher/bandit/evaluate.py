import json
import random

from target import choose

ARMS = 10
STEPS = 1000
RUNS = 30


def run(seed):
    rng = random.Random(seed)
    probs = [rng.random() for _ in range(ARMS)]
    counts = [0] * ARMS
    rewards = [0.0] * ARMS
    total = 0.0
    for t in range(STEPS):
        arm = choose(list(counts), list(rewards), t)
        if not isinstance(arm, int) or not 0 <= arm < ARMS:
            raise SystemExit(f"choose returned {arm!r} at step {t}")
        reward = 1.0 if rng.random() < probs[arm] else 0.0
        counts[arm] += 1
        rewards[arm] += reward
        total += reward
    return max(probs) - total / STEPS


def main():
    regret = sum(run(seed) for seed in range(RUNS)) / RUNS
    print(json.dumps({"Regret": regret}))


if __name__ == "__main__":
    main()
