"""``uld``: command-line access to every pipeline stage.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags. Exit status is 0 on success,
1 for configuration problems and 2 for failures while running.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, UldError

_MODES = ("raw", "uld", "kl", "uld_costed")
_COST_KINDS = ("uniform01", "levenshtein", "embedding_l2")
_METRICS = ("token_f1", "token_accuracy", "perplexity", "uld_w1", "ce", "total")


def _choice(options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return conv


def _float_list(text):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if not vals:
        raise ValueError("expected a comma-separated list of numbers")
    return vals


@dataclass(frozen=True)
class Key:
    name: str
    conv: object
    default: object
    help: str


KEYS = {k.name: k for k in [
    # paths
    Key("corpus", str, None, "corpus JSONL (gold or teacher answers)"),
    Key("teacher_ckpt", str, None, "teacher checkpoint; tokenizer files sit beside it"),
    Key("student_ckpt", str, None, "student checkpoint; tokenizer files sit beside it"),
    Key("out_dir", str, None, "output directory (default: $ULD_OUT or .)"),
    # model
    Key("vocab_size", int, None, "must match the tokenizer when given"),
    Key("context_len", int, 128, "maximum sequence length"),
    Key("d_model", int, 64, "embedding width"),
    Key("n_heads", int, 4, "attention heads"),
    Key("n_layers", int, 2, "transformer blocks"),
    # training
    Key("seed", int, 0, "seed for data order, initialization and sampling"),
    Key("lam", float, 1.5, "weight of the teacher term"),
    Key("tau", float, 1.0, "softmax temperature"),
    Key("epochs", int, 5, "passes over the training split"),
    Key("batch_size", int, 8, "sequences per step"),
    Key("max_lr", float, 3e-3, "peak learning rate of the one-cycle schedule"),
    Key("mode", _choice(_MODES), "uld", "objective: " + "|".join(_MODES)),
    Key("dataset_fraction", float, 1.0, "share of the training split used"),
    Key("cost_kind", _choice(_COST_KINDS), "levenshtein", "cost for uld_costed: " + "|".join(_COST_KINDS)),
    Key("eval_interval", int, 0, "steps between metric records (0: automatic)"),
    Key("max_answer_tokens", int, 16, "generation budget per answer"),
    # stage specific
    Key("n_items", int, 1000, "corpus size"),
    Key("merges", int, 256, "pair merges of the teacher tokenizer"),
    Key("pretrain_epochs", int, 2, "plain-text pretraining epochs for a fresh student"),
    Key("student_vocab", str, None, "student vocabulary file (default: character tokenizer)"),
    Key("split", _choice(("train", "val", "test")), "test", "evaluation split"),
    Key("lambdas", _float_list, [0.0, 0.5, 1.0, 1.5, 2.0, 3.0], "comma-separated lambda grid"),
    Key("metric", _choice(_METRICS), "token_f1", "ablation metric: " + "|".join(_METRICS)),
    Key("probe", str, None, "vocabulary file whose coverage is measured"),
    Key("reference", str, None, "vocabulary file measured against"),
    Key("n", int, 16, "support size"),
    Key("trials", int, 100, "random pairs"),
    Key("min_n", int, 1024, "smallest closed-form size (power of two)"),
    Key("max_n", int, 262144, "largest closed-form size (power of two)"),
    Key("exact_min", int, 16, "smallest exact-solver size (power of two)"),
    Key("exact_max", int, 512, "largest exact-solver size (power of two)"),
    Key("repetitions", int, 3, "timings per size"),
]}

_TRAIN = ["seed", "lam", "tau", "epochs", "batch_size", "max_lr", "mode", "dataset_fraction",
          "cost_kind", "eval_interval", "max_answer_tokens"]
_MODEL = ["vocab_size", "context_len", "d_model", "n_heads", "n_layers"]

COMMANDS = {
    "gen-corpus": ("write a seeded synthetic QA corpus",
                   ["seed", "n_items", "out_dir"], {}),
    "train-teacher": ("train a pair-merge teacher on the train split",
                      ["corpus", "seed", "merges", *_MODEL, "epochs", "batch_size", "max_lr",
                       "out_dir"],
                      {"epochs": 20, "context_len": 64}),
    "gen-answers": ("replace train/val answers with greedy teacher answers",
                    ["corpus", "teacher_ckpt", "max_answer_tokens", "out_dir"], {}),
    "distill": ("train a student against the frozen teacher",
                ["corpus", "teacher_ckpt", "student_vocab", "pretrain_epochs", *_TRAIN, *_MODEL,
                 "out_dir"], {}),
    "ablate-lambda": ("one ULD student per lambda, one metric per row",
                      ["corpus", "teacher_ckpt", "student_vocab", "pretrain_epochs", "lambdas",
                       "metric", *_TRAIN, *_MODEL, "out_dir"], {}),
    "eval": ("token accuracy, perplexity and token F1 of a checkpoint",
             ["student_ckpt", "corpus", "split", "max_answer_tokens", "out_dir"], {}),
    "vocab-overlap": ("percentage of the reference vocabulary found in the probe",
                      ["probe", "reference"], {}),
    "ot-check": ("closed form against twice the exact 0-1 transport cost",
                 ["n", "trials", "seed"], {}),
    "bench-ot": ("time closed form and exact solver over growing sizes",
                 ["min_n", "max_n", "exact_min", "exact_max", "repetitions", "seed", "out_dir"],
                 {}),
}


# -- configuration ----------------------------------------------------------------


def read_config(path):
    """Parse a ``key = value`` file into raw strings; unknown keys are errors."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    raw = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        raw[key] = value
    return raw


def _convert(key, value):
    try:
        return KEYS[key].conv(value)
    except ValueError as exc:
        raise ConfigError(f"bad value {value!r} for {key}: {exc}") from exc


def resolve(command, file_values, flag_values):
    """Defaults < config file < flags, restricted to the keys ``command`` uses."""
    _, names, overrides = COMMANDS[command]
    settings = {}
    for name in names:
        if name in flag_values and flag_values[name] is not None:
            settings[name] = _convert(name, flag_values[name])
        elif name in file_values:
            settings[name] = _convert(name, file_values[name])
        else:
            settings[name] = overrides.get(name, KEYS[name].default)
    if "out_dir" in settings and settings["out_dir"] is None:
        settings["out_dir"] = os.environ.get("ULD_OUT", ".")
    return settings


def _need(settings, *names):
    for name in names:
        if settings.get(name) is None:
            raise ConfigError(f"missing required key {name}")


def _help_epilog(command):
    _, names, overrides = COMMANDS[command]
    lines = ["keys (flag --KEY or 'KEY = value' in the config file):"]
    for name in names:
        k = KEYS[name]
        default = overrides.get(name, k.default)
        shown = "" if default is None else f" [default: {default}]"
        lines.append(f"  {name:<18} {k.help}{shown}")
    return "\n".join(lines)


def build_parser():
    parser = argparse.ArgumentParser(prog="uld", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for command, (summary, names, _) in COMMANDS.items():
        p = sub.add_parser(command, help=summary, description=summary, epilog=_help_epilog(command),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="key = value settings file")
        for name in names:
            flags = [f"--{name}"]
            if "_" in name:
                flags.append(f"--{name.replace('_', '-')}")
            p.add_argument(*flags, dest=name, metavar=name.upper(), help=argparse.SUPPRESS)
    return parser


# -- helpers ----------------------------------------------------------------------


def _tok_paths(ckpt):
    ckpt = Path(ckpt)
    return ckpt.with_suffix(".vocab"), ckpt.with_suffix(".merges")


def _load_tok(ckpt):
    from .tokenizer import Tokenizer

    vocab, merges = _tok_paths(ckpt)
    return Tokenizer.load(vocab, merges)


def _load_pair(ckpt):
    """Checkpoint plus the tokenizer stored next to it, checked for agreement."""
    from .model import check_compatible, load

    tok = _load_tok(ckpt)
    return check_compatible(load(ckpt), tok), tok


def _save_with_tok(model, tok, path):
    from .model import save

    save(model, path)
    vocab, merges = _tok_paths(path)
    tok.save(vocab, merges if tok.merges else None)
    if not tok.merges and merges.exists():
        merges.unlink()


def _out(settings, name):
    out = Path(settings["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _model_config(settings, tok):
    from .model import ModelConfig

    if settings["vocab_size"] is not None and settings["vocab_size"] != len(tok):
        raise ConfigError(f"vocab_size {settings['vocab_size']} does not match tokenizer size {len(tok)}")
    try:
        return ModelConfig(len(tok), settings["context_len"], settings["d_model"],
                           settings["n_heads"], settings["n_layers"], settings["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _train_config(settings):
    from .distill import TrainConfig

    try:
        return TrainConfig(**{k: settings[k] for k in _TRAIN})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- subcommands ------------------------------------------------------------------


def cmd_gen_corpus(s):
    from .corpus import gen_corpus, write_jsonl

    items = gen_corpus(s["seed"], s["n_items"])
    path = _out(s, "corpus.jsonl")
    write_jsonl(items, path)
    print(f"wrote {len(items)} items to {path}")


def cmd_train_teacher(s):
    from .corpus import by_split, read_jsonl
    from .distill import train_teacher
    from .tokenizer import bpe_train

    _need(s, "corpus")
    train = by_split(read_jsonl(s["corpus"]), "train")
    text = "\n".join(line for it in train for line in (it.prompt, it.answer))
    tok = bpe_train(text, s["merges"])
    teacher, metrics = train_teacher(train, tok, _model_config(s, tok), epochs=s["epochs"],
                                     max_lr=s["max_lr"], batch_size=s["batch_size"], seed=s["seed"])
    path = _out(s, "teacher.ckpt")
    _save_with_tok(teacher, tok, path)
    metrics.write_jsonl(_out(s, "teacher_metrics.jsonl"))
    print(f"teacher vocab={len(tok)} final train ce={metrics.final('train')['ce']:.4f} -> {path}")


def cmd_gen_answers(s):
    from .corpus import read_jsonl, write_jsonl
    from .distill import teacher_answers

    _need(s, "corpus", "teacher_ckpt")
    items = read_jsonl(s["corpus"])
    teacher, tok = _load_pair(s["teacher_ckpt"])
    new = teacher_answers(teacher, tok, items, s["max_answer_tokens"])
    path = _out(s, "answers.jsonl")
    write_jsonl(new, path)
    changed = sum(a.answer != b.answer for a, b in zip(items, new))
    print(f"wrote {len(new)} items ({changed} answers differ from gold) to {path}")


def _experiment(s):
    from .corpus import ALPHABET, read_jsonl
    from .distill import Experiment, pretrain_student
    from .tokenizer import Tokenizer, char_tokenizer

    _need(s, "corpus", "teacher_ckpt")
    items = read_jsonl(s["corpus"])
    if s["student_vocab"]:
        vocab = Path(s["student_vocab"])
        student_tok = Tokenizer.load(vocab, vocab.with_suffix(".merges"))
    else:
        student_tok = char_tokenizer(ALPHABET)
    teacher, teacher_tok = _load_pair(s["teacher_ckpt"])
    exp = Experiment(items, teacher, teacher_tok, student_tok, tau=s["tau"])
    mcfg = _model_config(s, student_tok)
    texts = [it.prompt.strip() for it in exp.split("train")]
    if s["pretrain_epochs"] > 0:
        init = pretrain_student(mcfg, student_tok, texts, s["pretrain_epochs"], seed=s["seed"])
    else:
        from .model import TinyCausalLM

        init = TinyCausalLM(mcfg)
    return exp, init


def cmd_distill(s):
    from .distill import train_student, train_student_costed

    cfg = _train_config(s)
    exp, init = _experiment(s)
    if cfg.mode == "uld_costed":
        model, metrics, trace = train_student_costed(cfg, exp, init)
        with open(_out(s, "costed_trace.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(json.dumps(r) + "\n" for r in trace.steps)
    else:
        model, metrics = train_student(cfg, exp, init)
    path = _out(s, "student.ckpt")
    _save_with_tok(model, exp.student_tok, path)
    metrics.write_jsonl(_out(s, "metrics.jsonl"))
    final = metrics.final("val")
    print(f"mode={cfg.mode} seed={cfg.seed} val ce={final['ce']:.4f} "
          f"uld_w1={final['uld_w1']:.4f} -> {path}")


def cmd_ablate_lambda(s):
    from .distill import ablate_lambda, write_ablation_csv

    if 0.0 not in s["lambdas"]:
        raise ConfigError("lambdas must include 0")
    cfg = _train_config(s)
    exp, init = _experiment(s)
    rows = ablate_lambda(s["lambdas"], cfg, exp, init, s["metric"])
    path = _out(s, "ablation.csv")
    write_ablation_csv(rows, path)
    for r in rows:
        print(f"lambda={r['lambda']:g} {r['metric']}={r['value']:.4f}")


def cmd_eval(s):
    from .corpus import by_split, read_jsonl
    from .distill import evaluate

    _need(s, "student_ckpt", "corpus")
    items = by_split(read_jsonl(s["corpus"]), s["split"])
    if not items:
        raise ConfigError(f"corpus has no {s['split']} items")
    student, tok = _load_pair(s["student_ckpt"])
    res = evaluate(student, tok, items, s["max_answer_tokens"])
    _write_json(_out(s, "eval.json"), res)
    print(" ".join(f"{k}={v:.4f}" for k, v in res.items()))


def cmd_vocab_overlap(s):
    from .tokenizer import read_vocab, vocab_overlap

    _need(s, "probe", "reference")
    pct = vocab_overlap(read_vocab(s["probe"]), read_vocab(s["reference"]))
    print(f"overlap_pct={pct:.2f}")


def cmd_ot_check(s):
    from .distributions import sort_desc
    from .losses import uld_w1_step
    from .ot import exact_ot, uniform01_cost

    if s["n"] < 1 or s["trials"] < 1:
        raise ConfigError("n and trials must be positive")
    rng = np.random.default_rng(s["seed"])
    C = uniform01_cost(s["n"])
    worst = 0.0
    for _ in range(s["trials"]):
        p, q = rng.dirichlet(np.ones(s["n"])), rng.dirichlet(np.ones(s["n"]))
        exact = exact_ot(sort_desc(p)[0], sort_desc(q)[0], C).cost
        worst = max(worst, abs(uld_w1_step(p, q) - 2 * exact))
    print(f"max_abs_diff={worst:.3e}")


def cmd_bench_ot(s):
    from .ot import bench_scaling, log2_sizes

    res = bench_scaling(log2_sizes(s["min_n"], s["max_n"]), s["repetitions"], seed=s["seed"],
                        exact_sizes=log2_sizes(s["exact_min"], s["exact_max"]))
    path = _out(s, "bench.csv")
    res.write_csv(path)
    for method, slope in res.slopes.items():
        print(f"{method} slope={slope:.3f}")
    print(f"max_identity_error={res.max_identity_error:.3e}")


HANDLERS = {
    "gen-corpus": cmd_gen_corpus,
    "train-teacher": cmd_train_teacher,
    "gen-answers": cmd_gen_answers,
    "distill": cmd_distill,
    "ablate-lambda": cmd_ablate_lambda,
    "eval": cmd_eval,
    "vocab-overlap": cmd_vocab_overlap,
    "ot-check": cmd_ot_check,
    "bench-ot": cmd_bench_ot,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_values = read_config(args.config) if args.config else {}
        settings = resolve(args.command, file_values, flags)
    except ConfigError as exc:
        print(f"uld {args.command}: config error: {exc}", file=sys.stderr)
        return 1
    try:
        HANDLERS[args.command](settings)
    except ConfigError as exc:
        print(f"uld {args.command}: config error: {exc}", file=sys.stderr)
        return 1
    except (UldError, OSError) as exc:
        print(f"uld {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
