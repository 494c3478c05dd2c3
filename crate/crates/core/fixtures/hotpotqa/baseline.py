import csv
import json
from datasets import load_dataset
from tqdm import tqdm

YES_NO_STARTS = (
    "is", "are", "was", "were",
    "do", "does", "did",
    "can", "could", "may", "might", "must",
    "have", "has", "had",
    "will", "would", "should", "shall"
)

def simple_answer_heuristic(question, fallback_title):
    q = (question or "").strip().lower()
    if any(q.startswith(aux + " ") for aux in YES_NO_STARTS):
        return "yes"
    return fallback_title if fallback_title is not None else "unknown"

def main():
    # Use the distractor setting validation split
    ds = load_dataset("hotpotqa/hotpot_qa", "distractor", split="validation")

    with open("submission.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["id", "answer", "supporting_facts"])
        writer.writeheader()

        for ex in tqdm(ds, desc="Generating baseline predictions"):
            ex_id = ex["id"]
            question = ex["question"]
            titles = ex["context"]["title"]
            sentences = ex["context"]["sentences"]

            # Choose up to two candidate supporting facts: first two titles with at least one sentence
            pred_sfs = []
            for idx, title in enumerate(titles):
                if idx < len(sentences) and len(sentences[idx]) > 0:
                    pred_sfs.append({"title": title, "sent_id": 0})
                if len(pred_sfs) == 2:
                    break

            # Fallbacks if not enough
            if not pred_sfs:
                # Ensure we still output something structurally valid
                if len(titles) > 0:
                    pred_sfs = [{"title": titles[0], "sent_id": 0}]
                else:
                    pred_sfs = []

            fallback_title = pred_sfs[0]["title"] if pred_sfs else (titles[0] if titles else None)
            answer = simple_answer_heuristic(question, fallback_title)

            writer.writerow({
                "id": ex_id,
                "answer": answer,
                "supporting_facts": json.dumps(pred_sfs, ensure_ascii=False)
            })

if __name__ == "__main__":
    main()
