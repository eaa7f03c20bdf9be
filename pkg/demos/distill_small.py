"""A teacher and a student that share no tokenizer, one seed of the flagship setup.

1. Generate the synthetic QA corpus and train a subword teacher on gold answers.
2. Let the frozen teacher rewrite the train/val answers.
3. Pretrain one character-level student, then distill it twice from the
   same starting point: on teacher text only, and with the extra W1 term.
4. Show that KL cannot even start across the two vocabularies.

    python3 demos/distill_small.py    # a few minutes
"""

from uldistill.corpus import gen_corpus
from uldistill.distill import (
    StudyConfig,
    TrainConfig,
    build_experiment,
    evaluate,
    pretrain_student,
    train_student,
)
from uldistill.errors import SupportError
from uldistill.model import ModelConfig
from uldistill.tokenizer import vocab_overlap

study = StudyConfig()  # 1000 items, 256 merges, 64-wide models; a few minutes on one CPU

items = gen_corpus(study.corpus_seed, study.n_items)
print("example:", items[0].prompt + "->", items[0].answer)

exp = build_experiment(items, study.merges, study.teacher_d_model, study.teacher_context,
                       study.teacher_epochs)
print(f"teacher vocab {len(exp.teacher_tok)}, student vocab {len(exp.student_tok)}, "
      f"overlap {vocab_overlap(exp.student_tok, exp.teacher_tok):.1f}% of the student's tokens")
scores = evaluate(exp.teacher, exp.teacher_tok, exp.split("test"))
print("teacher on test:", ", ".join(f"{k} {v:.3f}" for k, v in scores.items()))

train = exp.split("train")
changed = sum(a.answer != b.answer for a, b in zip(train, [it for it in items if it.split == "train"]))
print(f"teacher rewrote {changed}/{len(train)} train answers")

tok = exp.student_tok
mcfg = ModelConfig(vocab_size=len(tok), context_len=study.student_context,
                   d_model=study.student_d_model, seed=0)
init = pretrain_student(mcfg, tok, [it.prompt.strip() for it in train], study.pretrain_epochs)

for mode in ("raw", "uld"):
    cfg = TrainConfig(mode=mode, epochs=study.student_epochs, max_lr=study.student_lr)
    model, metrics = train_student(cfg, exp, init)
    final = metrics.final("val")
    scores = evaluate(model, tok, exp.split("test"))
    print(f"{mode:>3}: val ce {final['ce']:.3f}  val W1 {final['uld_w1']:.3f}  "
          f"test F1 {scores['token_f1']:.3f}  ({metrics.wall_time:.1f}s)")

try:
    train_student(TrainConfig(mode="kl", epochs=1), exp, init)
except SupportError as exc:
    print("kl:", exc)
