import argparse
import json

from data import make_split


def load(path):
    values = {}
    with open(path) as f:
        for line in f:
            key, _, raw = line.partition(":")
            values[key.strip()] = raw.strip()
    weights = [float(v) for v in values["weights"].strip("[]").split(",")]
    return weights, float(values["bias"])


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--config_fname", required=True)
    args = parser.parse_args()
    w, b = load(args.config_fname)
    rows = make_split(1, 500)
    print(f"scoring {len(rows)} held-out rows")
    mse = sum((sum(wi * xi for wi, xi in zip(w, x)) + b - y) ** 2 for x, y in rows) / len(rows)
    print(json.dumps({"mse": mse}))


if __name__ == "__main__":
    main()
