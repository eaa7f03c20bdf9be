"""Teacher -> student distillation pipeline at desk scale.

Flow: train a teacher on gold answers, let it (frozen) regenerate the
train/val answers greedily, then train students on those answers with
teacher forcing under one of four objectives:

``raw``         cross-entropy only (teacher-generated text distillation)
``uld``         CE + lam * closed-form W1 against the teacher distributions
``kl``          CE + lam * KL; needs identical teacher/student vocabularies
``uld_costed``  CE + lam * exact OT cost under a non-uniform cost matrix

Per sequence, CE runs over every student answer step while the teacher term
runs over the first ``min(|x_S|, |x_T|)`` index-aligned steps. Batches are
reduced by the mean over sequences of these per-sequence sums.
"""

import csv
import json
import math
import time
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .corpus import by_split, with_answer
from .distributions import softmax_temp, sort_desc
from .errors import DegenerateInputError, ParameterError, SupportError
from .losses import (
    DEFAULT_LAMBDA,
    DEFAULT_TAU,
    StepLossInput,
    ce_grad_rows,
    ce_rows,
    kl_grad_rows,
    kl_rows,
    softmax_vjp,
    uld_rows,
    uld_sign_rows,
)
from .model import TinyCausalLM, greedy_generate_batch
from .optim import Adam, one_cycle_lr
from .ot import (
    CostMatrix,
    char_count_embedding,
    embedding_l2_cost_matrix,
    exact_ot,
    levenshtein_cost_matrix,
    uniform01_cost,
)

MODES = ("raw", "uld", "kl", "uld_costed")
COSTED_KINDS = ("uniform01", "levenshtein", "embedding_l2")
METRIC_FIELDS = ("step", "split", "ce", "uld_w1", "kl", "total", "lr", "seed")
EVAL_EVERY = 200
EVAL_MIN_STEPS = 2000
LAMBDA_GRID = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    lam: float = DEFAULT_LAMBDA
    tau: float = DEFAULT_TAU
    epochs: int = 5
    batch_size: int = 8
    max_lr: float = 3e-3
    mode: str = "uld"
    dataset_fraction: float = 1.0
    cost_kind: str = "levenshtein"
    eval_interval: int = 0  # 0: automatic
    max_answer_tokens: int = 16

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError(f"lambda must be non-negative, got {self.lam}")
        if not 0 < self.dataset_fraction <= 1:
            raise ParameterError(f"dataset_fraction must lie in (0, 1], got {self.dataset_fraction}")
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.cost_kind not in COSTED_KINDS:
            raise ParameterError(f"unknown cost_kind {self.cost_kind!r}")
        if self.tau <= 0 or self.epochs < 1 or self.batch_size < 1 or self.max_lr <= 0:
            raise ParameterError("tau, epochs, batch_size and max_lr must be positive")


@dataclass
class RunMetrics:
    records: list = field(default_factory=list)
    wall_time: float = 0.0

    def log(self, **rec):
        self.records.append({k: rec.get(k) for k in METRIC_FIELDS})

    def split(self, name):
        return [r for r in self.records if r["split"] == name]

    def final(self, split="val"):
        return self.split(split)[-1]

    def to_jsonl(self):
        return "".join(json.dumps(r) + "\n" for r in self.records)

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read_jsonl(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls([json.loads(line) for line in fh if line.strip()])


@dataclass
class CostedTrace:
    """Per-training-step teacher-term values of a costed run."""

    kind: str
    steps: list = field(default_factory=list)  # dicts: step, ot_w1, closed_w1
    wall_time: float = 0.0


# -- encoding -----------------------------------------------------------------


@dataclass(frozen=True)
class Encoded:
    inputs: tuple  # bos + prompt + answer (no final eos)
    start: int  # position whose output predicts the first answer token
    targets: tuple  # answer ids + eos


def encode_item(tok, prompt, answer, context_len=None):
    v = tok.vocab
    prompt_ids = [v.bos_id] + tok.encode(prompt)
    answer_ids = tok.encode(answer)
    inputs = prompt_ids + answer_ids
    if context_len is not None and len(inputs) > context_len:
        raise ParameterError(f"sequence of {len(inputs)} tokens exceeds context_len {context_len}")
    return Encoded(tuple(inputs), len(prompt_ids) - 1, tuple(answer_ids) + (v.eos_id,))


def _batch(encs, pad_id):
    T = max(len(e.inputs) for e in encs)
    ids = np.full((len(encs), T), pad_id, dtype=np.int64)
    b_idx, t_idx, gold, offsets = [], [], [], [0]
    for b, e in enumerate(encs):
        ids[b, : len(e.inputs)] = e.inputs
        n = len(e.targets)
        b_idx.extend([b] * n)
        t_idx.extend(range(e.start, e.start + n))
        gold.extend(e.targets)
        offsets.append(offsets[-1] + n)
    return ids, np.array(b_idx), np.array(t_idx), np.array(gold), offsets


def step_distributions(model, tok, items, tau=DEFAULT_TAU, batch_size=32):
    """Teacher-forced answer-step distributions, one ``(n_steps, V)`` array per item."""
    out = []
    ctx = model.config.context_len
    for k in range(0, len(items), batch_size):
        encs = [encode_item(tok, it.prompt, it.answer, ctx) for it in items[k : k + batch_size]]
        ids, b_idx, t_idx, _, offsets = _batch(encs, tok.vocab.pad_id)
        rows = model.logits(ids)[b_idx, t_idx].astype(np.float64)
        probs = softmax_temp(rows, tau)
        out.extend(probs[offsets[j] : offsets[j + 1]] for j in range(len(encs)))
    return out


def align_steps(answer_text, teacher_tok, student_tok, teacher, student, prompt="",
                tau=DEFAULT_TAU, lam=DEFAULT_LAMBDA):
    """Index-aligned :class:`StepLossInput` list, truncated to the shorter tokenization.

    Each model runs teacher-forced on its own tokenization of ``prompt +
    answer``; gold tokens come from the student side.
    """
    if not answer_text:
        raise DegenerateInputError("empty answer")
    es = encode_item(student_tok, prompt, answer_text, student.config.context_len)
    et = encode_item(teacher_tok, prompt, answer_text, teacher.config.context_len)
    zs = student.logits(np.array(es.inputs)).astype(np.float64)
    zt = teacher.logits(np.array(et.inputs)).astype(np.float64)
    m = min(len(es.targets), len(et.targets))
    return [
        StepLossInput(zs[es.start + t], int(es.targets[t]), zt[et.start + t], tau, lam)
        for t in range(m)
    ]


# -- objective ----------------------------------------------------------------


def _check_kl_support(student_tok, teacher_tok):
    if student_tok.vocab.tokens != teacher_tok.vocab.tokens:
        raise SupportError(
            "KL distillation needs one shared vocabulary: teacher has "
            f"{len(teacher_tok.vocab)} tokens, student has {len(student_tok.vocab)}"
        )


class _CostedTerm:
    """Exact-OT teacher term with an envelope gradient (dual potentials of the plan)."""

    def __init__(self, kind, student_tok, teacher_tok, cost_matrix=None):
        self.kind = kind
        self.vs = len(student_tok.vocab)
        self.vt = len(teacher_tok.vocab)
        if kind == "uniform01":
            self.C = uniform01_cost(max(self.vs, self.vt))
        elif cost_matrix is not None:
            self.C = cost_matrix if isinstance(cost_matrix, CostMatrix) else CostMatrix(cost_matrix)
        elif kind == "levenshtein":
            self.C = levenshtein_cost_matrix(student_tok.vocab, teacher_tok.vocab)
        else:
            alphabet = sorted({ch for t in student_tok.vocab.tokens + teacher_tok.vocab.tokens
                               for ch in t})
            self.C = embedding_l2_cost_matrix(
                char_count_embedding(student_tok.vocab, alphabet),
                char_count_embedding(teacher_tok.vocab, alphabet),
            )
        expect = (max(self.vs, self.vt),) * 2 if kind == "uniform01" else (self.vs, self.vt)
        if self.C.shape != expect:
            raise ParameterError(f"cost matrix shape {self.C.shape}, expected {expect}")

    def rows(self, P, Q):
        vals = np.empty(P.shape[0])
        grads = np.empty_like(P)
        for r in range(P.shape[0]):
            p, q = P[r], Q[r]
            if self.kind == "uniform01":
                n = self.C.shape[0]
                pp = np.zeros(n)
                pp[: self.vs] = p
                qq = np.zeros(n)
                qq[: self.vt] = q
                ps, order = sort_desc(pp)
                plan = exact_ot(ps, sort_desc(qq)[0], self.C)
                g = np.empty(n)
                g[order] = plan.u
                g = g[: self.vs]
            else:
                plan = exact_ot(p, q, self.C)
                g = plan.u
            vals[r] = plan.cost
            grads[r] = g
        return vals, grads


def _seq_sums(values, offsets):
    return np.array([values[offsets[j] : offsets[j + 1]].sum() for j in range(len(offsets) - 1)])


def _objective(mode, lam, tau, P, gold, offsets, teacher_q, costed=None, need_grad=True):
    """Per-sequence CE / teacher-term sums and the gradient over student rows.

    ``P`` stacks the student answer-step distributions of the batch;
    ``offsets`` delimit sequences; ``teacher_q`` holds one array per sequence.
    """
    B = len(offsets) - 1
    ce_seq = _seq_sums(ce_rows(P, gold), offsets)
    G = ce_grad_rows(P, gold, tau) if need_grad else None
    out = {"ce": ce_seq, "uld_w1": None, "kl": None, "ot_w1": None}
    if teacher_q is not None:
        sel, qs, al_off = [], [], [0]
        for j in range(B):
            m = min(offsets[j + 1] - offsets[j], teacher_q[j].shape[0])
            sel.extend(range(offsets[j], offsets[j] + m))
            qs.append(teacher_q[j][:m])
            al_off.append(al_off[-1] + m)
        sel = np.array(sel, dtype=np.int64)
        Pa, Qa = P[sel], np.concatenate(qs)
        out["uld_w1"] = _seq_sums(uld_rows(Pa, Qa), al_off)
        if mode == "kl":
            out["kl"] = _seq_sums(kl_rows(Qa, Pa), al_off)
        if mode == "uld_costed":
            vals, dual = costed.rows(Pa, Qa)
            out["ot_w1"] = _seq_sums(vals, al_off)
        if need_grad and mode != "raw":
            if mode == "uld":
                kd = softmax_vjp(Pa, uld_sign_rows(Pa, Qa), tau)
            elif mode == "kl":
                kd = kl_grad_rows(Qa, Pa, tau)
            else:
                kd = softmax_vjp(Pa, dual, tau)
            Gk = np.zeros_like(G)
            Gk[sel] = kd
            G = G + lam * Gk
    if need_grad:
        G = G / B
    return out, G


_TERM_KEY = {"uld": "uld_w1", "kl": "kl", "uld_costed": "ot_w1"}


def _total(mode, lam, parts):
    key = _TERM_KEY.get(mode)
    ce = float(parts["ce"].mean())
    return ce if key is None else ce + lam * float(parts[key].mean())


# -- training loop --------------------------------------------------------------


def eval_interval_for(total_steps, requested=0):
    if requested:
        return requested
    if total_steps >= EVAL_MIN_STEPS:
        return EVAL_EVERY
    return max(1, round(total_steps * EVAL_EVERY / EVAL_MIN_STEPS))


def select_fraction(n, fraction, seed):
    """Indices of the ``ceil(fraction * n)`` items kept by a seeded shuffle (sorted)."""
    k = math.ceil(fraction * n)
    return np.sort(np.random.default_rng(seed).permutation(n)[:k])


def _clone(model):
    return TinyCausalLM(model.config, {k: t.data.copy() for k, t in model.params.items()})


def _split_means(model, encs, teacher_q, mode, lam, tau, costed, pad_id, batch_size=32):
    ce, w1, kl, ot = [], [], [], []
    for k in range(0, len(encs), batch_size):
        chunk = encs[k : k + batch_size]
        ids, b_idx, t_idx, gold, offsets = _batch(chunk, pad_id)
        P = softmax_temp(model.logits(ids)[b_idx, t_idx].astype(np.float64), tau)
        tq = None if teacher_q is None else teacher_q[k : k + batch_size]
        parts, _ = _objective(mode, lam, tau, P, gold, offsets, tq, costed, need_grad=False)
        ce.append(parts["ce"])
        if parts["uld_w1"] is not None:
            w1.append(parts["uld_w1"])
        if parts["kl"] is not None:
            kl.append(parts["kl"])
        if parts["ot_w1"] is not None:
            ot.append(parts["ot_w1"])
    cat = lambda xs: np.concatenate(xs) if xs else None  # noqa: E731
    return {"ce": cat(ce), "uld_w1": cat(w1), "kl": cat(kl), "ot_w1": cat(ot)}


def _record(metrics, step, split, mode, lam, parts, lr, seed):
    mean = lambda k: None if parts[k] is None else float(parts[k].mean())  # noqa: E731
    ce, w1, kl = mean("ce"), mean("uld_w1"), mean("kl")
    # costed runs log the closed-form W1 as monitor; their OT values live in CostedTrace
    if mode == "kl":
        total = ce + lam * kl
    elif mode == "raw":
        total = ce
    else:
        total = ce + lam * w1
    metrics.log(step=step, split=split, ce=ce, uld_w1=w1, kl=kl, total=total, lr=lr, seed=seed)


def fit(config, student, student_tok, train_items, val_items=(),
        teacher_train_q=None, teacher_val_q=None, costed=None, trace=None):
    """Core loop shared by teacher and student training; returns ``(model, RunMetrics)``.

    ``student`` is cloned, never mutated. Teacher distributions are constants.
    """
    model = _clone(student)
    mode = config.mode
    ctx = model.config.context_len
    keep = select_fraction(len(train_items), config.dataset_fraction, config.seed)
    encs = [encode_item(student_tok, train_items[i].prompt, train_items[i].answer, ctx) for i in keep]
    tq = None if teacher_train_q is None else [teacher_train_q[i] for i in keep]
    val_encs = [encode_item(student_tok, it.prompt, it.answer, ctx) for it in val_items]
    if mode != "raw" and tq is None:
        raise ParameterError(f"mode {mode!r} needs teacher distributions")

    rng = np.random.default_rng(config.seed)
    opt = Adam(model.parameters(), lr=config.max_lr)
    per_epoch = math.ceil(len(encs) / config.batch_size)
    total_steps = per_epoch * config.epochs
    every = eval_interval_for(total_steps, config.eval_interval)
    metrics = RunMetrics()
    pad = student_tok.vocab.pad_id
    acc = {"ce": [], "uld_w1": [], "kl": [], "ot_w1": []}
    t0 = time.perf_counter()
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(encs))
        for k in range(0, len(encs), config.batch_size):
            idx = order[k : k + config.batch_size]
            ids, b_idx, t_idx, gold, offsets = _batch([encs[i] for i in idx], pad)
            lr = one_cycle_lr(step, total_steps, config.max_lr)
            model.zero_grad()
            with ad.Tape() as tape:
                logits = model.forward(ids)
                P = softmax_temp(logits.data[b_idx, t_idx].astype(np.float64), config.tau)
                batch_q = None if tq is None else [tq[i] for i in idx]
                parts, G = _objective(mode, config.lam, config.tau, P, gold, offsets,
                                      batch_q, costed)
                full = np.zeros(logits.shape, dtype=np.float32)
                full[b_idx, t_idx] = G
                loss = ad.external_loss(logits, _total(mode, config.lam, parts), full)
            ad.backward(tape, loss)
            opt.step(lr)
            step += 1
            for key in acc:
                if parts[key] is not None:
                    acc[key].append(parts[key])
            if trace is not None:
                trace.steps.append({
                    "step": step,
                    "ot_w1": float(parts["ot_w1"].mean()),
                    "closed_w1": float(parts["uld_w1"].mean()),
                })
            if step % every == 0 or step == total_steps:
                tr = {key: (np.concatenate(v) if v else None) for key, v in acc.items()}
                _record(metrics, step, "train", mode, config.lam, tr, lr, config.seed)
                acc = {key: [] for key in acc}
                if val_encs:
                    vp = _split_means(model, val_encs, teacher_val_q, mode, config.lam,
                                      config.tau, costed, pad)
                    _record(metrics, step, "val", mode, config.lam, vp, lr, config.seed)
    metrics.wall_time = time.perf_counter() - t0
    return model, metrics


@dataclass
class Experiment:
    """Everything a student run needs: data, tokenizers and the frozen teacher."""

    items: list  # train/val answers are teacher-generated, test keeps gold
    teacher: TinyCausalLM
    teacher_tok: object
    student_tok: object
    teacher_q: dict = field(default_factory=dict)  # split -> list of (n_T, V_T) arrays
    tau: float = DEFAULT_TAU

    def split(self, name):
        return by_split(self.items, name)

    def teacher_dists(self, split):
        if split not in self.teacher_q:
            self.teacher_q[split] = step_distributions(
                self.teacher, self.teacher_tok, self.split(split), self.tau)
        return self.teacher_q[split]


def train_teacher(items, tok, model_config, epochs=40, max_lr=3e-3, batch_size=16, seed=0):
    """Fit a teacher on gold answers of ``items`` (CE only)."""
    cfg = TrainConfig(seed=seed, epochs=epochs, max_lr=max_lr, batch_size=batch_size, mode="raw")
    return fit(cfg, TinyCausalLM(model_config), tok, list(items))


@dataclass(frozen=True)
class _PlainText:
    prompt: str
    answer: str


def pretrain_student(model_config, tok, texts, epochs=2, max_lr=3e-3, batch_size=8, seed=0):
    """Generic next-token pretraining on plain ``texts`` (every position is a target).

    Gives a fresh student some language ability before distillation, the way
    real students start from a pretrained checkpoint.
    """
    cfg = TrainConfig(seed=seed, epochs=epochs, max_lr=max_lr, batch_size=batch_size, mode="raw")
    model, _ = fit(cfg, TinyCausalLM(model_config), tok, [_PlainText("", t) for t in texts])
    return model


def teacher_answers(teacher, tok, items, max_new=16):
    """Greedy teacher answers for train/val items; test items keep gold answers."""
    todo = [i for i, it in enumerate(items) if it.split != "test"]
    prompts = [[tok.vocab.bos_id] + tok.encode(items[i].prompt) for i in todo]
    outs = greedy_generate_batch(teacher, prompts, max_new, tok.vocab.eos_id, tok.vocab.pad_id)
    new = list(items)
    for i, prompt, seq in zip(todo, prompts, outs):
        new[i] = with_answer(items[i], tok.decode(seq[len(prompt):]))
    return new


def train_student(config, exp, student_init, cost_matrix=None):
    """Train a student under ``config.mode``; returns ``(model, RunMetrics)``."""
    mode = config.mode
    if mode == "kl":
        _check_kl_support(exp.student_tok, exp.teacher_tok)
    if mode == "uld_costed":
        model, metrics, _ = train_student_costed(config, exp, student_init, cost_matrix)
        return model, metrics
    return fit(config, student_init, exp.student_tok, exp.split("train"), exp.split("val"),
               exp.teacher_dists("train"), exp.teacher_dists("val"))


def train_student_costed(config, exp, student_init, cost_matrix=None):
    """ULD with the closed form replaced by exact OT under ``config.cost_kind``.

    Returns ``(model, RunMetrics, CostedTrace)``; the trace holds, per
    training step, the exact-OT term and the closed-form W1 of the same batch.
    """
    config = replace(config, mode="uld_costed")
    costed = _CostedTerm(config.cost_kind, exp.student_tok, exp.teacher_tok, cost_matrix)
    trace = CostedTrace(config.cost_kind)
    t0 = time.perf_counter()
    model, metrics = fit(config, student_init, exp.student_tok, exp.split("train"),
                         exp.split("val"), exp.teacher_dists("train"), exp.teacher_dists("val"),
                         costed=costed, trace=trace)
    trace.wall_time = time.perf_counter() - t0
    return model, metrics, trace


# -- evaluation -----------------------------------------------------------------


def token_f1(prediction, gold):
    """Bag-of-words F1 on lowercased whitespace tokens; both empty scores 1."""
    p = prediction.lower().split()
    g = gold.lower().split()
    if not p and not g:
        return 1.0
    common = sum((Counter(p) & Counter(g)).values())
    if common == 0:
        return 0.0
    precision = common / len(p)
    recall = common / len(g)
    return 2 * precision * recall / (precision + recall)


def evaluate(student, tok, items, max_new=16):
    """Teacher-forced token accuracy / perplexity on gold answers, plus greedy token F1."""
    ctx = student.config.context_len
    correct = 0
    nll = 0.0
    count = 0
    for k in range(0, len(items), 32):
        encs = [encode_item(tok, it.prompt, it.answer, ctx) for it in items[k : k + 32]]
        ids, b_idx, t_idx, gold, _ = _batch(encs, tok.vocab.pad_id)
        rows = student.logits(ids)[b_idx, t_idx].astype(np.float64)
        correct += int((rows.argmax(axis=-1) == gold).sum())
        nll += float(ce_rows(softmax_temp(rows), gold).sum())
        count += len(gold)
    prompts = [[tok.vocab.bos_id] + tok.encode(it.prompt) for it in items]
    outs = greedy_generate_batch(student, prompts, max_new, tok.vocab.eos_id, tok.vocab.pad_id)
    f1 = [token_f1(tok.decode(seq[len(pr):]), it.answer) for pr, seq, it in zip(prompts, outs, items)]
    return {
        "token_accuracy": correct / count,
        "perplexity": math.exp(nll / count),
        "token_f1": float(np.mean(f1)),
    }


def ablate_lambda(lambdas, base_config, exp, student_init, metric="token_f1"):
    """One ULD run per lambda (shared seed and teacher); rows of (lambda, metric, value, seed)."""
    lambdas = list(lambdas)
    if not lambdas:
        raise ParameterError("lambda list must be non-empty")
    rows = []
    test = exp.split("test")
    for lam in lambdas:
        cfg = replace(base_config, lam=float(lam), mode="uld")
        model, metrics = train_student(cfg, exp, student_init)
        if metric in ("token_f1", "token_accuracy", "perplexity"):
            value = evaluate(model, exp.student_tok, test)[metric]
        else:
            value = metrics.final("val")[metric]
        rows.append({"lambda": float(lam), "metric": metric, "value": value, "seed": cfg.seed})
    return rows


def write_ablation_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "metric", "value", "seed"])
        for r in rows:
            w.writerow([repr(r["lambda"]), r["metric"], repr(r["value"]), r["seed"]])


# -- directional study ------------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    """Defaults of the flagship teacher -> student comparison."""

    n_items: int = 1000
    corpus_seed: int = 0
    merges: int = 256
    teacher_d_model: int = 64
    teacher_context: int = 64
    teacher_epochs: int = 20
    student_d_model: int = 64
    student_context: int = 128
    pretrain_epochs: int = 2
    student_epochs: int = 15
    student_lr: float = 6e-3
    lam: float = DEFAULT_LAMBDA
    seeds: tuple = (0, 1, 2, 3, 4)
    modes: tuple = ("raw", "uld")


def build_experiment(items, merges=256, teacher_d_model=64, teacher_context=64,
                     teacher_epochs=20, seed=0):
    """Pair-merge teacher overfit to the train split, answers regenerated, char student tokenizer."""
    from .corpus import ALPHABET
    from .model import ModelConfig
    from .tokenizer import bpe_train, char_tokenizer

    train = by_split(items, "train")
    text = "\n".join(line for it in train for line in (it.prompt, it.answer))
    teacher_tok = bpe_train(text, merges)
    tcfg = ModelConfig(vocab_size=len(teacher_tok), context_len=teacher_context,
                       d_model=teacher_d_model, seed=seed)
    teacher, _ = train_teacher(train, teacher_tok, tcfg, epochs=teacher_epochs, seed=seed)
    answers = teacher_answers(teacher, teacher_tok, items)
    return Experiment(answers, teacher, teacher_tok, char_tokenizer(ALPHABET))


def directional_study(study=StudyConfig(), exp=None):
    """Train one student per (seed, mode); rows carry final val W1/CE and test F1.

    Each seed gets its own pretrained student init, shared by all modes.
    """
    from .corpus import gen_corpus
    from .model import ModelConfig

    if exp is None:
        items = gen_corpus(study.corpus_seed, study.n_items)
        exp = build_experiment(items, study.merges, study.teacher_d_model,
                               study.teacher_context, study.teacher_epochs, study.corpus_seed)
    tok = exp.student_tok
    texts = [it.prompt.strip() for it in exp.split("train")]
    test = exp.split("test")
    rows = []
    for seed in study.seeds:
        mcfg = ModelConfig(vocab_size=len(tok), context_len=study.student_context,
                           d_model=study.student_d_model, seed=seed)
        init = pretrain_student(mcfg, tok, texts, study.pretrain_epochs, seed=seed)
        for mode in study.modes:
            cfg = TrainConfig(seed=seed, lam=study.lam, epochs=study.student_epochs,
                              max_lr=study.student_lr, mode=mode)
            model, metrics = train_student(cfg, exp, init)
            final = metrics.final("val")
            rows.append({
                "seed": seed,
                "mode": mode,
                "val_uld_w1": final["uld_w1"],
                "val_ce": final["ce"],
                **evaluate(model, tok, test),
            })
    return rows
