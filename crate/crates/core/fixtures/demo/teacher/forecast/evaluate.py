import argparse
import csv
import json

from metrics_utils import smape
from series import HELD_OUT


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--submission_file", required=True)
    args = parser.parse_args()
    with open(args.submission_file, newline="") as f:
        rows = sorted(csv.DictReader(f), key=lambda r: int(r["hour"]))
    forecast = [float(r["forecast"]) for r in rows]
    if len(forecast) != len(HELD_OUT):
        raise SystemExit(f"expected {len(HELD_OUT)} rows, got {len(forecast)}")
    print(json.dumps({"smape": smape(HELD_OUT, forecast)}))


if __name__ == "__main__":
    main()
