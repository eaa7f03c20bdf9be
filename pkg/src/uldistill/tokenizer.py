"""Toy tokenizers with deliberately different vocabularies.

The student side uses one token per character; the teacher side uses a
greedy pair-merge (BPE-style) subword vocabulary trained on the corpus.
"""

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DegenerateInputError, FormatError, ParameterError

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple
    index: dict = field(compare=False, repr=False)

    @classmethod
    def from_tokens(cls, tokens):
        tokens = tuple(tokens)
        if tokens[: len(SPECIALS)] != SPECIALS:
            raise FormatError("specials", f"vocabulary must start with {SPECIALS}")
        index = {t: i for i, t in enumerate(tokens)}
        if len(index) != len(tokens):
            raise FormatError("tokens", "duplicate token in vocabulary")
        return cls(tokens, index)

    def __len__(self):
        return len(self.tokens)

    @property
    def pad_id(self):
        return self.index[PAD]

    @property
    def bos_id(self):
        return self.index[BOS]

    @property
    def eos_id(self):
        return self.index[EOS]

    @property
    def unk_id(self):
        return self.index[UNK]

    @property
    def specials(self):
        return {name: self.index[name] for name in SPECIALS}

    def regular_tokens(self):
        return [t for t in self.tokens if t not in SPECIALS]


class Tokenizer:
    """Vocabulary plus encode/decode. ``merges`` is empty for the character tokenizer."""

    def __init__(self, vocab, merges=()):
        self.vocab = vocab
        self.merges = tuple(tuple(m) for m in merges)
        self._ranks = {m: r for r, m in enumerate(self.merges)}
        self._cache = {}

    @property
    def kind(self):
        return "bpe" if self.merges else "char"

    def __len__(self):
        return len(self.vocab)

    def encode(self, text):
        hit = self._cache.get(text)
        if hit is not None:
            return list(hit)
        symbols = [ch if ch in self.vocab.index else None for ch in text]
        if self._ranks:
            symbols = self._apply_merges(symbols)
        unk = self.vocab.unk_id
        ids = tuple(unk if s is None else self.vocab.index[s] for s in symbols)
        self._cache[text] = ids
        return list(ids)

    def _apply_merges(self, symbols):
        ranks = self._ranks
        while len(symbols) > 1:
            best = None
            for a, b in zip(symbols, symbols[1:]):
                r = ranks.get((a, b))
                if r is not None and (best is None or r < best):
                    best = r
            if best is None:
                break
            a, b = self.merges[best]
            out = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
                    out.append(a + b)
                    i += 2
                else:
                    out.append(symbols[i])
                    i += 1
            symbols = out
        return symbols

    def decode(self, ids):
        """Concatenate token strings, skipping every special token."""
        toks = self.vocab.tokens
        return "".join(toks[i] for i in ids if toks[i] not in SPECIALS)

    def token_strings(self, ids):
        return [self.vocab.tokens[i] for i in ids]

    def save(self, vocab_path, merges_path=None):
        write_vocab(self.vocab, vocab_path)
        if merges_path is not None:
            write_merges(self.merges, merges_path)

    @classmethod
    def load(cls, vocab_path, merges_path=None):
        vocab = read_vocab(vocab_path)
        merges = read_merges(merges_path) if merges_path and Path(merges_path).exists() else ()
        return cls(vocab, merges)


def char_tokenizer(alphabet):
    chars = sorted(set(alphabet))
    if not chars:
        raise ParameterError("alphabet must be non-empty")
    return Tokenizer(Vocabulary.from_tokens(SPECIALS + tuple(chars)))


def bpe_train(corpus, num_merges):
    """Greedy pair-merge training.

    Each round merges the most frequent adjacent pair; ties go to the
    lexicographically smallest pair. Lines are trained independently, so no
    merge spans a newline. Stops early when no adjacent pair remains.
    """
    if not corpus:
        raise DegenerateInputError("corpus must be non-empty")
    if num_merges < 0:
        raise ParameterError("num_merges must be non-negative")
    lines = Counter(line for line in corpus.split("\n") if line)
    alphabet = sorted({ch for line in lines for ch in line})
    seqs = [list(line) for line in lines]
    weights = list(lines.values())

    counts = Counter()
    where = defaultdict(set)
    for k, seq in enumerate(seqs):
        for pair in zip(seq, seq[1:]):
            counts[pair] += weights[k]
            where[pair].add(k)

    merges = []
    tokens = list(alphabet)
    seen = set(tokens)
    for _ in range(num_merges):
        live = [(c, pair) for pair, c in counts.items() if c > 0]
        if not live:
            break
        top = max(c for c, _ in live)
        pair = min(p for c, p in live if c == top)
        a, b = pair
        merged = a + b
        merges.append(pair)
        if merged not in seen:
            seen.add(merged)
            tokens.append(merged)
        for k in sorted(where.pop(pair, ())):
            seq, w = seqs[k], weights[k]
            for old in zip(seq, seq[1:]):
                counts[old] -= w
            out = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and seq[i] == a and seq[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            seqs[k] = out
            for new in zip(out, out[1:]):
                counts[new] += w
                where[new].add(k)
        counts.pop(pair, None)
    return Tokenizer(Vocabulary.from_tokens(SPECIALS + tuple(tokens)), merges)


def _token_set(v):
    if isinstance(v, Tokenizer):
        v = v.vocab
    toks = v.tokens if isinstance(v, Vocabulary) else v
    return {t for t in toks if t not in SPECIALS}


def vocab_overlap(probe, reference):
    """Percentage of the reference vocabulary present verbatim in the probe (specials excluded)."""
    ref = _token_set(reference)
    if not ref:
        raise DegenerateInputError("reference vocabulary has no regular tokens")
    return 100.0 * len(_token_set(probe) & ref) / len(ref)


def levenshtein(a, b):
    """Unit-cost edit distance (insert, delete, substitute)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


# -- file formats -------------------------------------------------------------


def write_vocab(vocab, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in vocab.tokens:
            fh.write(t + "\n")


def read_vocab(path):
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if not text.endswith("\n"):
        raise FormatError("vocab", f"{path} is not newline terminated")
    return Vocabulary.from_tokens(text[:-1].split("\n"))


def write_merges(merges, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b in merges:
            fh.write(f"{a}\t{b}\n")


def read_merges(path):
    merges = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise FormatError("merges", f"line {lineno} is not 'tokenA<TAB>tokenB'")
            merges.append((parts[0], parts[1]))
    return merges
