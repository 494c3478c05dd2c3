import argparse
import csv
import json

from reviews import TEST


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--submission_file", required=True)
    args = parser.parse_args()
    gold = {review_id: label for review_id, _, label in TEST}
    with open(args.submission_file, newline="") as f:
        rows = list(csv.DictReader(f))
    predicted = {row["id"]: int(row["label"]) for row in rows}
    missing = sorted(set(gold) - set(predicted))
    if missing:
        raise SystemExit(f"missing predictions for {len(missing)} reviews, e.g. {missing[0]}")
    correct = sum(predicted[k] == v for k, v in gold.items())
    print(json.dumps({"accuracy": correct / len(gold)}))


if __name__ == "__main__":
    main()
