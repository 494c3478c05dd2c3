import csv

from reviews import TEST

POSITIVE = {"good", "great", "excellent"}
NEGATIVE = {"bad", "awful", "boring"}


def predict(text):
    words = [w.strip(".,;:!?\"'()").lower() for w in text.split()]
    score = sum(w in POSITIVE for w in words) - sum(w in NEGATIVE for w in words)
    return 1 if score >= 0 else 0


def main():
    with open("submission.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "label"])
        for review_id, text, _ in TEST:
            writer.writerow([review_id, predict(text)])
    print(f"wrote {len(TEST)} predictions to submission.csv")


if __name__ == "__main__":
    main()
