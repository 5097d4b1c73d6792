#!/usr/bin/env python3
"""Generate the bundled synthetic text corpus and labeled sentences.

Paragraphs keep one topic, sentences follow a small template grammar, so the
text has both local (word spelling, phrase order) and paragraph-level
regularities. Output is deterministic for a given seed.
"""

import argparse
import random
from pathlib import Path

TOPICS = {
    "kitchen": {
        "nouns": ["soup", "bread", "onion", "kettle", "pan", "recipe", "oven", "spoon", "garlic", "butter"],
        "verbs": ["stirred", "baked", "sliced", "tasted", "warmed", "seasoned", "poured", "chopped"],
        "adjs": ["warm", "salty", "fresh", "crisp", "golden", "bitter", "sweet"],
        "places": ["in the kitchen", "at the stove", "by the sink", "on the table"],
    },
    "harbour": {
        "nouns": ["boat", "sail", "rope", "anchor", "tide", "gull", "net", "mast", "pier", "lantern"],
        "verbs": ["tied", "hauled", "mended", "watched", "rowed", "loaded", "painted", "checked"],
        "adjs": ["wet", "heavy", "grey", "salt-stained", "old", "narrow", "steady"],
        "places": ["at the harbour", "on the pier", "near the lighthouse", "by the water"],
    },
    "garden": {
        "nouns": ["rose", "hedge", "seed", "spade", "bean", "apple", "weed", "path", "bench", "tulip"],
        "verbs": ["planted", "watered", "pruned", "picked", "raked", "dug", "trimmed", "gathered"],
        "adjs": ["green", "tall", "tangled", "bright", "muddy", "ripe", "quiet"],
        "places": ["in the garden", "behind the shed", "along the wall", "under the tree"],
    },
    "school": {
        "nouns": ["lesson", "book", "chalk", "map", "essay", "number", "teacher", "desk", "bell", "pencil"],
        "verbs": ["read", "copied", "explained", "counted", "wrote", "drew", "marked", "studied"],
        "adjs": ["long", "careful", "difficult", "short", "neat", "clever", "patient"],
        "places": ["in the classroom", "at the library", "in the hall", "by the window"],
    },
}

NAMES = ["Anna", "Tom", "Mira", "Jonas", "Lena", "Sam", "Ruth", "Omar", "Ida", "Paul"]
TIMES = ["In the morning", "Later", "After lunch", "That evening", "At noon", "Before dark", "Once again"]
LINKS = ["and then", "while", "because", "so", "but"]


def article(word):
    return "an" if word[0] in "aeiou" else "a"


def sentence(rng, topic, name):
    t = TOPICS[topic]
    noun, noun2 = rng.sample(t["nouns"], 2)
    verb, verb2 = rng.sample(t["verbs"], 2)
    adj = rng.choice(t["adjs"])
    place = rng.choice(t["places"])
    form = rng.randrange(6)
    if form == 0:
        return f"{name} {verb} the {adj} {noun} {place}."
    if form == 1:
        return f"{rng.choice(TIMES)}, {name} {verb} {article(adj)} {adj} {noun}."
    if form == 2:
        return f"The {noun} was {adj}, {rng.choice(LINKS)} {name} {verb2} the {noun2}."
    if form == 3:
        return f"{name} {verb} the {noun} {place} {rng.choice(LINKS)} {rng.choice(NAMES)} {verb2} the {noun2}."
    if form == 4:
        return f"{place.capitalize()}, the {noun} and the {noun2} were {adj}."
    return f"Nobody {verb} the {noun} {place} until {name} came."


def paragraph(rng, topic):
    name = rng.choice(NAMES)
    return " ".join(sentence(rng, topic, name) for _ in range(rng.randint(3, 7)))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    parser.add_argument("--bytes", type=int, default=100_000, help="approximate corpus size")
    parser.add_argument("--labeled", type=int, default=600, help="labeled sentences")
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)

    parts, size = [], 0
    topics = sorted(TOPICS)
    while size < args.bytes:
        p = paragraph(rng, rng.choice(topics))
        parts.append(p)
        size += len(p) + 2
    (args.out_dir / "corpus.txt").write_text("\n\n".join(parts) + "\n")

    rows = []
    for i in range(args.labeled):
        topic = topics[i % len(topics)]
        rows.append(f"{topic}\t{sentence(rng, topic, rng.choice(NAMES))}")
    rng.shuffle(rows)
    (args.out_dir / "labeled.tsv").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
