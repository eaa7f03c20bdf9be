"""Tiny causal transformer LM built on :mod:`uldistill.autodiff`, plus checkpoints.

Checkpoint layout (all integers little-endian u32)::

    b"ULDC" | version | tensor records...
    record = name_len | utf-8 name | rank | dims... | raw float32 data

The first record is ``config`` (rank 1, six exact-integer floats: vocab_size,
context_len, d_model, n_heads, n_layers, seed); parameters follow in
declaration order.
"""

import hashlib
import io
import struct
from dataclasses import astuple, dataclass

import numpy as np

from . import autodiff as ad
from .errors import CompatibilityError, FormatError, ParameterError

MAGIC = b"ULDC"
VERSION = 1
INIT_SCALE = 0.02
_MAX_EXACT_F32 = 2**24


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    context_len: int = 128
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    seed: int = 0

    def __post_init__(self):
        for name, val in zip(("vocab_size", "context_len", "d_model", "n_heads", "n_layers"),
                             astuple(self)[:5]):
            if int(val) != val or val < 1:
                raise ParameterError(f"{name} must be a positive integer, got {val}")
        if self.context_len < 2:
            raise ParameterError("context_len must be at least 2")
        if self.d_model % self.n_heads:
            raise ParameterError("d_model must be divisible by n_heads")
        if not 0 <= self.seed < _MAX_EXACT_F32:
            raise ParameterError(f"seed must lie in [0, 2**24), got {self.seed}")
        if max(astuple(self)) >= _MAX_EXACT_F32:
            raise ParameterError("config values must be below 2**24")


def _param_shapes(cfg):
    d, v = cfg.d_model, cfg.vocab_size
    shapes = [("tok_emb", (v, d)), ("pos_emb", (cfg.context_len, d))]
    for i in range(cfg.n_layers):
        shapes += [
            (f"h{i}.ln1", (d,)),
            (f"h{i}.wq", (d, d)),
            (f"h{i}.wk", (d, d)),
            (f"h{i}.wv", (d, d)),
            (f"h{i}.wo", (d, d)),
            (f"h{i}.ln2", (d,)),
            (f"h{i}.w1", (d, 4 * d)),
            (f"h{i}.w2", (4 * d, d)),
        ]
    shapes.append(("ln_f", (d,)))
    return shapes


class TinyCausalLM:
    """Pre-norm decoder: causal attention and GELU MLP blocks, output tied to ``tok_emb``."""

    def __init__(self, config, params=None):
        self.config = config
        if params is None:
            rng = np.random.default_rng(config.seed)
            params = {}
            for name, shape in _param_shapes(config):
                if len(shape) == 1:
                    params[name] = np.ones(shape, dtype=np.float32)
                else:
                    params[name] = (rng.standard_normal(shape) * INIT_SCALE).astype(np.float32)
        self.params = {name: ad.Tensor(np.asarray(params[name], dtype=np.float32), True, name)
                       for name, _ in _param_shapes(config)}

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def forward(self, ids):
        """Logits tensor of shape ``(B, T, vocab)`` (or ``(T, vocab)`` for 1-D ids)."""
        ids = np.asarray(ids, dtype=np.int64)
        single = ids.ndim == 1
        if single:
            ids = ids[None, :]
        B, T = ids.shape
        cfg = self.config
        if T > cfg.context_len:
            raise ParameterError(f"sequence of {T} tokens exceeds context_len {cfg.context_len}")
        P = self.params
        H = cfg.n_heads
        dh = cfg.d_model // H
        scale = np.float32(1.0 / np.sqrt(dh))

        x = ad.add(ad.gather_rows(P["tok_emb"], ids), ad.gather_rows(P["pos_emb"], np.arange(T)))
        for i in range(cfg.n_layers):
            h = ad.rms_norm(x, P[f"h{i}.ln1"])

            def heads(w):
                t = ad.reshape(ad.matmul(h, P[w]), (B, T, H, dh))
                return ad.transpose(t, (0, 2, 1, 3))

            q, k, v = heads(f"h{i}.wq"), heads(f"h{i}.wk"), heads(f"h{i}.wv")
            att = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), scale)
            att = ad.softmax(ad.causal_mask_add(att))
            y = ad.transpose(ad.matmul(att, v), (0, 2, 1, 3))
            y = ad.matmul(ad.reshape(y, (B, T, cfg.d_model)), P[f"h{i}.wo"])
            x = ad.add(x, y)
            h = ad.rms_norm(x, P[f"h{i}.ln2"])
            x = ad.add(x, ad.matmul(ad.gelu(ad.matmul(h, P[f"h{i}.w1"])), P[f"h{i}.w2"]))
        x = ad.rms_norm(x, P["ln_f"])
        logits = ad.matmul(x, ad.transpose(P["tok_emb"], (1, 0)))
        if single:
            logits = ad.reshape(logits, (T, cfg.vocab_size))
        return logits

    def logits(self, ids):
        """Plain numpy logits, no tape."""
        return self.forward(ids).data

    def digest(self):
        return hashlib.sha256(to_bytes(self)).hexdigest()


def init(config):
    return TinyCausalLM(config)


def greedy_generate(model, prompt, max_new, eos_id=None):
    """Append argmax tokens until ``eos_id`` (kept) or ``max_new`` new tokens."""
    return greedy_generate_batch(model, [prompt], max_new, eos_id)[0]


def greedy_generate_batch(model, prompts, max_new, eos_id=None, pad_id=0):
    """Greedy decoding of several prompts at once via right padding."""
    ctx = model.config.context_len
    seqs = [list(p) for p in prompts]
    for s in seqs:
        if len(s) > ctx:
            raise ParameterError(f"prompt of {len(s)} tokens exceeds context_len {ctx}")
    live = [i for i, s in enumerate(seqs) if max_new > 0 and len(s) < ctx]
    produced = [0] * len(seqs)
    while live:
        T = max(len(seqs[i]) for i in live)
        batch = np.full((len(live), T), pad_id, dtype=np.int64)
        for r, i in enumerate(live):
            batch[r, : len(seqs[i])] = seqs[i]
        out = model.logits(batch)
        nxt = []
        for r, i in enumerate(live):
            tok = int(np.argmax(out[r, len(seqs[i]) - 1]))
            seqs[i].append(tok)
            produced[i] += 1
            if tok != eos_id and produced[i] < max_new and len(seqs[i]) < ctx:
                nxt.append(i)
        live = nxt
    return seqs


# -- checkpoints --------------------------------------------------------------


def _write_tensor(fh, name, arr):
    raw = name.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)
    fh.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def to_bytes(model):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _write_tensor(buf, "config", np.array(astuple(model.config), dtype=np.float32))
    for name, t in model.params.items():
        _write_tensor(buf, name, t.data)
    return buf.getvalue()


def save(model, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(model))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, field):
        if self.pos + n > len(self.data):
            raise FormatError(field, "file is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, field):
        return struct.unpack("<I", self.take(4, field))[0]

    def tensor(self, expected):
        field = f"tensor:{expected}"
        name = self.take(self.u32(field), field).decode("utf-8", errors="replace")
        if name != expected:
            raise FormatError(field, f"expected tensor {expected!r}, found {name!r}")
        rank = self.u32(field)
        shape = tuple(self.u32(field) for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.take(4 * count, field), dtype="<f4").reshape(shape)


def from_bytes(data):
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("magic", f"not a checkpoint (expected {MAGIC!r})")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError("version", f"unsupported version {version}")
    raw = r.tensor("config")
    if raw.shape != (6,):
        raise FormatError("config", f"expected 6 values, found shape {raw.shape}")
    try:
        config = ModelConfig(*(int(v) for v in raw))
    except ParameterError as exc:
        raise FormatError("config", str(exc)) from exc
    params = {}
    for name, shape in _param_shapes(config):
        arr = r.tensor(name)
        if arr.shape != shape:
            raise FormatError(f"tensor:{name}", f"shape {arr.shape}, expected {shape}")
        params[name] = arr.astype(np.float32)
    if r.pos != len(data):
        raise FormatError("trailing", f"{len(data) - r.pos} unexpected bytes after last tensor")
    return TinyCausalLM(config, params)


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def check_compatible(model, vocab):
    """Raise :class:`CompatibilityError` unless ``vocab`` has the model's vocab_size."""
    n = len(vocab)
    if n != model.config.vocab_size:
        raise CompatibilityError(
            f"checkpoint expects {model.config.vocab_size} tokens, vocabulary has {n}")
    return model
