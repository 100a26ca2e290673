#!/usr/bin/env python3
"""Regenerates the synthetic fixtures under data/.

Deterministic: the same script always writes byte-identical files.
"""
import json
import random
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "data"

POS = ["great", "excellent", "good", "love", "wonderful", "amazing",
       "solid", "fantastic", "happy", "reliable", "superb", "delightful"]
NEG = ["bad", "terrible", "awful", "poor", "hate", "broken",
       "disappointing", "horrible", "cheap", "useless", "boring", "flimsy"]
NOUNS = ["phone", "battery", "screen", "film", "plot", "camera",
         "service", "story", "sound", "design", "price", "acting"]
# Phrases that carry sentiment without any lexicon word, as real reviews do.
POS_CTX = ["would buy it again", "worth every penny", "highly recommend it to friends",
           "exceeded my expectations", "my whole family enjoys it", "works like a charm",
           "a pleasure to use every day", "glad i chose this one"]
NEG_CTX = ["returned it after a week", "a waste of money", "would not recommend it to anyone",
           "stopped working within days", "support never answered my emails",
           "regret buying this one", "fell apart on day two", "asked the shop for a refund"]
PATTERNS = [
    "the {n1} is {a1}",
    "the {n1} is {a1} and the {n2} is {a2}",
    "this {n1} was really {a1}",
    "overall the {n1} felt {a1} but the {n2} was {a2}",
    "i found the {n1} quite {a1}",
    "a {a1} {n1} with a {a2} {n2}",
    "honestly the {n1} is {a1} and {a2}",
]


def sentence(rng, label, mixed):
    pattern = rng.choice(PATTERNS)
    main, other = (POS, NEG) if label == 1 else (NEG, POS)
    a1 = rng.choice(main)
    a2 = rng.choice(other if mixed else main)
    n1, n2 = rng.sample(NOUNS, 2)
    ctx = rng.choice(POS_CTX if label == 1 else NEG_CTX)
    return pattern.format(n1=n1, n2=n2, a1=a1, a2=a2) + ", " + ctx


def sentiment(n, prefix, rng, mixed_rate):
    rows = []
    for i in range(n):
        label = i % 2
        mixed = rng.random() < mixed_rate
        rows.append({"id": f"{prefix}{i:03d}",
                     "text": sentence(rng, label, mixed),
                     "label": label})
    rng.shuffle(rows)
    return rows


SUBJECTS = ["the cat", "a farmer", "the company", "the court", "a student",
            "the mayor", "the team", "a doctor"]
VERBS = [("bought", "sold"), ("won", "lost"), ("opened", "closed"),
         ("approved", "rejected"), ("joined", "left")]
OBJECTS = ["the store", "the contract", "a new factory", "the match",
           "the proposal", "the club"]


def nli(n, prefix, rng):
    rows = []
    for i in range(n):
        subj = rng.choice(SUBJECTS)
        verb, opposite = rng.choice(VERBS)
        obj = rng.choice(OBJECTS)
        premise = f"{subj} {verb} {obj} on monday after a long debate"
        label = i % 2
        hyp = f"{subj} {verb if label == 1 else opposite} {obj}"
        rows.append({"id": f"{prefix}{i:03d}", "premise": premise,
                     "hypothesis": hyp, "label": label})
    rng.shuffle(rows)
    return rows


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def main():
    rng = random.Random(20240601)
    write_jsonl(DATA / "sst_synth_train.jsonl", sentiment(96, "tr", rng, 0.25))
    write_jsonl(DATA / "sst_synth_test.jsonl", sentiment(40, "te", rng, 0.25))
    write_jsonl(DATA / "nli_synth_train.jsonl", nli(32, "ntr", rng))
    write_jsonl(DATA / "nli_synth_test.jsonl", nli(12, "nte", rng))

    # The toy victim knows only two thirds of the sentiment words.
    lexicon = {}
    for w in POS[:8]:
        lexicon[w] = [0.0, 1.5]
    for w in NEG[:8]:
        lexicon[w] = [1.5, 0.0]
    with open(DATA / "toy_lexicon.json", "w", encoding="utf-8") as f:
        json.dump(lexicon, f, indent=1, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
