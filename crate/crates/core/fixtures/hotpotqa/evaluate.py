import argparse
import csv
import json
import math
import re
import string
from collections import defaultdict
from datasets import load_dataset

PUNCT = set(string.punctuation)
ARTICLES = {"a", "an", "the"}
WHITESPACE_RE = re.compile(r"\s+")

def normalize_answer(s):
    if s is None:
        return ""
    s = s.lower()

    def remove_punc(text):
        return "".join(ch for ch in text if ch not in PUNCT)

    def remove_articles(text):
        return re.sub(r"\b(a|an|the)\b", " ", text)

    def white_space_fix(text):
        return WHITESPACE_RE.sub(" ", text).strip()

    return white_space_fix(remove_articles(remove_punc(s)))

def f1_score(prediction, ground_truth):
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(ground_truth).split()
    if len(pred_tokens) == 0 and len(gold_tokens) == 0:
        return 1.0
    if len(pred_tokens) == 0 or len(gold_tokens) == 0:
        return 0.0
    common = defaultdict(int)
    for t in gold_tokens:
        common[t] += 1
    num_same = 0
    for t in pred_tokens:
        if common[t] > 0:
            num_same += 1
            common[t] -= 1
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)

def exact_match_score(prediction, ground_truth):
    return 1.0 if normalize_answer(prediction) == normalize_answer(ground_truth) else 0.0

def sp_em_f1(pred_set, gold_set):
    # pred_set and gold_set are sets of (title, sent_id) tuples
    inter = pred_set.intersection(gold_set)
    if len(gold_set) == 0 and len(pred_set) == 0:
        return 1.0, 1.0
    if len(gold_set) == 0:
        # No gold facts; treat as EM/F1 zero if pred non-empty; otherwise 1
        return (1.0 if len(pred_set) == 0 else 0.0), (1.0 if len(pred_set) == 0 else 0.0)
    em = 1.0 if pred_set == gold_set else 0.0
    if len(pred_set) == 0:
        return em, 0.0
    precision = len(inter) / len(pred_set)
    recall = len(inter) / len(gold_set)
    if precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return em, f1

def parse_supporting_facts(cell):
    try:
        data = json.loads(cell)
        out = set()
        if isinstance(data, list):
            for item in data:
                if isinstance(item, dict):
                    title = item.get("title", "")
                    sent_id = item.get("sent_id", 0)
                    try:
                        sent_id = int(sent_id)
                    except Exception:
                        # if cannot parse, skip this item
                        continue
                    out.add((title, sent_id))
        return out
    except Exception:
        return set()

def load_predictions_csv(path):
    preds = {}
    with open(path, "r", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        for row in reader:
            ex_id = row.get("id", "")
            answer = row.get("answer", "")
            sf_cell = row.get("supporting_facts", "[]")
            pred_sfs = parse_supporting_facts(sf_cell)
            preds[ex_id] = {"answer": answer, "supporting_facts": pred_sfs}
    return preds

def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--submission_file", type=str, required=True)
    args = parser.parse_args()

    # Load dev split of HotpotQA distractor
    ds = load_dataset("hotpotqa/hotpot_qa", "distractor", split="validation")

    gold_by_id = {}
    for ex in ds:
        ex_id = ex["id"]
        answer = ex["answer"]
        titles = ex["supporting_facts"]["title"]
        sent_ids = ex["supporting_facts"]["sent_id"]
        gold_sfs = set()
        for t, s in zip(titles, sent_ids):
            try:
                s = int(s)
            except Exception:
                continue
            gold_sfs.add((t, s))
        gold_by_id[ex_id] = {"answer": answer, "supporting_facts": gold_sfs}

    preds = load_predictions_csv(args.submission_file)

    total = len(gold_by_id)
    ans_em_sum = 0.0
    ans_f1_sum = 0.0
    sp_em_sum = 0.0
    sp_f1_sum = 0.0
    joint_em_sum = 0.0
    joint_f1_sum = 0.0

    for ex_id, gold in gold_by_id.items():
        pred = preds.get(ex_id, {"answer": "", "supporting_facts": set()})

        a_em = exact_match_score(pred["answer"], gold["answer"])
        a_f1 = f1_score(pred["answer"], gold["answer"])
        s_em, s_f1 = sp_em_f1(pred["supporting_facts"], gold["supporting_facts"])

        ans_em_sum += a_em
        ans_f1_sum += a_f1
        sp_em_sum += s_em
        sp_f1_sum += s_f1
        joint_em_sum += (a_em * s_em)
        joint_f1_sum += (a_f1 * s_f1)

    metrics = {
        "joint_f1": joint_f1_sum / total if total > 0 else 0.0,
        "ans_em": ans_em_sum / total if total > 0 else 0.0,
        "ans_f1": ans_f1_sum / total if total > 0 else 0.0,
        "sp_em": sp_em_sum / total if total > 0 else 0.0,
        "sp_f1": sp_f1_sum / total if total > 0 else 0.0,
        "joint_em": joint_em_sum / total if total > 0 else 0.0,
    }
    # Print a single JSON object
    print(json.dumps(metrics))

if __name__ == "__main__":
    main()
