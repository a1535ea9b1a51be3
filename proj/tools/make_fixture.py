#!/usr/bin/env python3
"""Generates the synthetic test corpus under data/fixture/.

The corpus is tiny but carries the same structure as the real data: two
dialects with distinct orthographic habits (the md side writes î inside
words, the ro side writes â and uses words like "sunt"), six topics with
dedicated vocabulary, $ne$ entity masks, three article splits, and a
tweet source with validation/test splits. Everything is deterministic.

Also writes data/fixture/import/: a small prediction-interchange fixture
with two deliberately weak internal models that share two test errors
(irrecoverable by stacking them alone) plus a perfect external model, so
importing the external file must raise the stacked score.
"""

import os
import random

ROOT = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "fixture")

TOPICS = {
    "culture": ["muzeu", "teatru", "film", "carte", "poezie", "expoziție", "concert", "pictură"],
    "finance": ["bancă", "leu", "credit", "buget", "investiție", "piață", "dobândă", "curs"],
    "politics": ["guvern", "parlament", "ministru", "alegeri", "partid", "lege", "primar", "vot"],
    "science": ["cercetare", "laborator", "experiment", "fizică", "teorie", "studiu", "chimie", "date"],
    "sports": ["fotbal", "meci", "echipă", "campionat", "gol", "antrenor", "turneu", "scor"],
    "tech": ["telefon", "internet", "software", "rețea", "calculator", "aplicație", "server", "cod"],
}

MARKERS = {
    "MD": ["cînd", "mîine", "pîine", "sîmbătă", "oleacă", "amu", "mata", "ghini",
           "sara", "copchil", "harbuz", "curechi", "îndată", "vinit"],
    "RO": ["când", "mâine", "pâine", "sâmbătă", "puțin", "acum", "dumneavoastră", "bine",
           "seara", "copil", "pepene", "varză", "sunt", "astăzi"],
}

FILLER = ["în", "la", "de", "cu", "pe", "despre", "pentru", "din", "un", "o", "cel", "mai"]


def sentence(rng, dialect, topic_words, with_mask):
    markers = MARKERS[dialect]
    words = []
    if with_mask:
        words.append("$ne$")
        words.append("a spus că")
    words.append(rng.choice(markers))
    words.append(rng.choice(FILLER))
    words.append(rng.choice(topic_words))
    words.append(rng.choice(FILLER))
    words.append(rng.choice(topic_words))
    words.append(rng.choice(markers))
    words.append(rng.choice(FILLER))
    words.append(rng.choice(topic_words))
    if rng.random() < 0.5:
        words.append(rng.choice(markers))
    return " ".join(words) + "."


def article(rng, dialect, topic):
    topic_words = TOPICS[topic]
    parts = [sentence(rng, dialect, topic_words, with_mask=False)]
    parts.append(sentence(rng, dialect, topic_words, with_mask=True))
    parts.append(sentence(rng, dialect, topic_words, with_mask=rng.random() < 0.3))
    return " ".join(parts)


def tweet(rng, dialect):
    markers = MARKERS[dialect]
    any_topic = rng.choice(list(TOPICS.values()))
    words = [rng.choice(markers), rng.choice(FILLER), rng.choice(any_topic),
             rng.choice(markers), rng.choice(FILLER), rng.choice(markers)]
    return " ".join(words)


def write_source(dirname, splits):
    os.makedirs(dirname, exist_ok=True)
    manifest = []
    for split_name, rows in splits.items():
        path = os.path.join(dirname, split_name + ".tsv")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for row in rows:
                f.write("\t".join(row) + "\n")
        manifest.append((split_name, len(rows)))
    with open(os.path.join(dirname, "manifest.tsv"), "w", encoding="utf-8", newline="\n") as f:
        for split_name, count in manifest:
            f.write(f"{split_name}\t{count}\n")


def make_articles(rng):
    splits = {"train": [], "validation": [], "test": []}
    per_split = {"train": 10, "validation": 2, "test": 2}
    for split_name, docs_per_cell in per_split.items():
        rows = []
        for dialect in ("MD", "RO"):
            for topic in TOPICS:
                for i in range(docs_per_cell):
                    doc_id = f"{dialect.lower()}-{split_name[:2]}-{topic}-{i:02d}"
                    rows.append((doc_id, dialect, topic, "news", article(rng, dialect, topic)))
        rows.sort(key=lambda r: r[0])
        splits[split_name] = rows
    return splits


def make_tweets(rng):
    splits = {}
    for split_name, per_dialect in (("validation", 6), ("test", 12)):
        rows = []
        for dialect in ("MD", "RO"):
            for i in range(per_dialect):
                doc_id = f"{dialect.lower()}-tw-{split_name[:2]}-{i:02d}"
                rows.append((doc_id, dialect, "-", "tweet", tweet(rng, dialect)))
        rows.sort(key=lambda r: r[0])
        splits[split_name] = rows
    return splits


def make_import_fixture():
    out_dir = os.path.join(ROOT, "import")
    os.makedirs(out_dir, exist_ok=True)
    classes = ["MD", "RO"]
    val_ids = [f"v{i:02d}" for i in range(20)]
    test_ids = [f"t{i:02d}" for i in range(20)]
    gold = {s: i % 2 for i, s in enumerate(val_ids + test_ids)}

    # Errors per model; t02 and t09 are wrong for both internal models, so a
    # stacker over the internal pair cannot recover them.
    errors = {
        "m1": {"v01", "v07", "v13", "t02", "t09", "t15", "t17"},
        "m2": {"v03", "v09", "t02", "t09", "t05"},
        "ext": set(),
    }
    confidence = {"m1": 0.8, "m2": 0.8, "ext": 0.95}

    def rows_for(model, ids):
        rows = []
        for s in ids:
            g = gold[s]
            label = g if s not in errors[model] else 1 - g
            p_label = confidence[model]
            probs = [0.0, 0.0]
            probs[label] = p_label
            probs[1 - label] = 1.0 - p_label
            rows.append((s, model, str(label), repr(probs[0]), repr(probs[1])))
        return rows

    header = "sample_id\tmodel_id\thard_label\tp_MD\tp_RO"
    with open(os.path.join(out_dir, "internal.tsv"), "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        for model in ("m1", "m2"):
            for row in rows_for(model, val_ids + test_ids):
                f.write("\t".join(row) + "\n")
    with open(os.path.join(out_dir, "external.tsv"), "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        for row in rows_for("ext", val_ids + test_ids):
            f.write("\t".join(row) + "\n")

    for name, ids in (("golds_validation.tsv", val_ids), ("golds_test.tsv", test_ids)):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as f:
            for s in ids:
                f.write(f"{s}\t{classes[gold[s]]}\n")


def main():
    rng = random.Random(20260822)
    write_source(os.path.join(ROOT, "moroco"), make_articles(rng))
    write_source(os.path.join(ROOT, "moroco-tweets"), make_tweets(rng))
    make_import_fixture()
    print(f"fixture written under {ROOT}")


if __name__ == "__main__":
    main()
