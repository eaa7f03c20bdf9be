"""Synthetic extractive QA corpus over a small closed world."""

import hashlib
import json
from dataclasses import asdict, dataclass, replace

import numpy as np

ALPHABET = "abcdefghijklmnopqrstuvwxyz .?"

ANIMALS = ["cat", "dog", "fox", "owl", "bee", "cow", "pig", "hen",
           "yak", "elk", "ant", "bat", "eel", "ram", "emu", "gnu"]
COLORS = ["red", "blue", "green", "pink", "gray", "gold",
          "teal", "tan", "black", "white", "brown", "lime"]
NAMES = ["ann", "bob", "cal", "dan", "eve", "fay", "gus", "hal",
         "ida", "jon", "kim", "lea", "max", "ned", "oli", "pam"]
NUMBERS = ["one", "two", "three", "four", "five", "six",
           "seven", "eight", "nine", "ten", "eleven", "twelve"]
OBJECTS = ["pens", "cups", "hats", "keys", "maps", "books",
           "coins", "shoes", "bags", "rings", "jars", "kites"]
CITIES = ["rome", "paris", "oslo", "lima", "cairo", "tokyo",
          "delhi", "quito", "seoul", "dubai", "perth", "miami"]

SPLITS = ("train", "val", "test")
N_FACTS = 2


@dataclass(frozen=True)
class CorpusItem:
    context: str
    question: str
    answer: str
    split: str = "train"

    @property
    def prompt(self):
        return f"{self.context} {self.question} "


def _pick(rng, pool, k):
    return [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]


def _colors(rng):
    who = _pick(rng, ANIMALS, N_FACTS)
    what = _pick(rng, COLORS, N_FACTS)
    k = int(rng.integers(N_FACTS))
    ctx = " ".join(f"the {a} is {c}." for a, c in zip(who, what))
    return ctx, f"what color is the {who[k]}?", what[k]


def _counts(rng):
    who = _pick(rng, NAMES, N_FACTS)
    num = _pick(rng, NUMBERS, N_FACTS)
    obj = _pick(rng, OBJECTS, N_FACTS)
    k = int(rng.integers(N_FACTS))
    ctx = " ".join(f"{w} has {n} {o}." for w, n, o in zip(who, num, obj))
    return ctx, f"how many {obj[k]} does {who[k]} have?", num[k]


def _places(rng):
    who = _pick(rng, NAMES, N_FACTS)
    where = _pick(rng, CITIES, N_FACTS)
    k = int(rng.integers(N_FACTS))
    ctx = " ".join(f"{w} lives in {c}." for w, c in zip(who, where))
    return ctx, f"where does {who[k]} live?", where[k]


_TEMPLATES = (_colors, _counts, _places)


def split_of(index, n_items):
    """80/10/10 assignment from the rank of a hash of the item index."""
    return _split_table(n_items)[index]


def _split_table(n_items):
    keys = sorted(range(n_items), key=lambda i: hashlib.sha256(str(i).encode()).hexdigest())
    n_train = (8 * n_items) // 10
    n_val = n_items // 10
    table = [None] * n_items
    for rank, i in enumerate(keys):
        table[i] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return table


def gen_corpus(seed, n_items):
    """Deterministic templated QA triples; every answer is a substring of its context."""
    if n_items < 1:
        raise ValueError("n_items must be at least 1")
    rng = np.random.default_rng(seed)
    splits = _split_table(n_items)
    items = []
    for i in range(n_items):
        make = _TEMPLATES[int(rng.integers(len(_TEMPLATES)))]
        ctx, question, answer = make(rng)
        items.append(CorpusItem(ctx, question, answer, splits[i]))
    return items


def by_split(items, split):
    return [it for it in items if it.split == split]


def with_answer(item, answer):
    return replace(item, answer=answer)


def write_jsonl(items, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for it in items:
            fh.write(json.dumps(asdict(it)) + "\n")


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [CorpusItem(**json.loads(line)) for line in fh if line.strip()]
