# Offline stand-in for the `datasets` package: three validation rows.
ROWS = [
    {
        "id": "q1",
        "answer": "Arthur's Magazine",
        "supporting_facts": {"title": ["Arthur's Magazine", "First for Women"], "sent_id": [0, 0]},
    },
    {
        "id": "q2",
        "answer": "Delhi",
        "supporting_facts": {"title": ["Oberoi family", "The Oberoi Group"], "sent_id": [0, 0]},
    },
    {
        "id": "q3",
        "answer": "yes",
        "supporting_facts": {"title": ["X", "Y"], "sent_id": [1, 2]},
    },
]


def load_dataset(*args, **kwargs):
    return list(ROWS)
