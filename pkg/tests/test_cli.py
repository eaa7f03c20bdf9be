import re

import pytest

from uldistill import cli
from uldistill.corpus import read_jsonl
from uldistill.tokenizer import char_tokenizer, write_vocab

TINY = ["--d_model", "16", "--epochs", "1"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr() if capsys else ("", "")
    return code, out, err


def pipeline(capsys, out):
    """gen-corpus -> train-teacher -> gen-answers -> distill at toy size."""
    assert run(capsys, "gen-corpus", "--n_items", 40, "--seed", 1, "--out_dir", out)[0] == 0
    assert run(capsys, "train-teacher", "--corpus", out / "corpus.jsonl", "--merges", 16,
               *TINY, "--out_dir", out)[0] == 0
    assert run(capsys, "gen-answers", "--corpus", out / "corpus.jsonl",
               "--teacher_ckpt", out / "teacher.ckpt", "--out_dir", out)[0] == 0
    assert run(capsys, "distill", "--corpus", out / "answers.jsonl", "--teacher_ckpt",
               out / "teacher.ckpt", "--pretrain_epochs", 1, *TINY, "--out_dir", out)[0] == 0


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    pipeline(None, out)
    return out


class TestSubcommands:
    def test_pipeline_outputs(self, built):
        names = {p.name for p in built.iterdir()}
        assert {"corpus.jsonl", "teacher.ckpt", "teacher.vocab", "teacher.merges",
                "teacher_metrics.jsonl", "answers.jsonl", "student.ckpt", "student.vocab",
                "metrics.jsonl"} <= names
        assert len(read_jsonl(built / "answers.jsonl")) == 40

    def test_vocab_overlap_identical(self, capsys, built):
        v = built / "teacher.vocab"
        code, out, _ = run(capsys, "vocab-overlap", "--probe", v, "--reference", v)
        assert code == 0
        assert out.strip() == "overlap_pct=100.00"

    def test_vocab_overlap_partial(self, capsys, tmp_path):
        write_vocab(char_tokenizer("ab").vocab, tmp_path / "a.vocab")
        write_vocab(char_tokenizer("bc").vocab, tmp_path / "b.vocab")
        _, out, _ = run(capsys, "vocab-overlap", "--probe", tmp_path / "a.vocab",
                        "--reference", tmp_path / "b.vocab")
        assert out.strip() == "overlap_pct=50.00"

    def test_kl_mismatch_exit_2(self, capsys, built, tmp_path):
        code, _, err = run(capsys, "distill", "--mode", "kl", "--corpus", built / "answers.jsonl",
                           "--teacher_ckpt", built / "teacher.ckpt", "--pretrain_epochs", 0,
                           *TINY, "--out_dir", tmp_path)
        assert code == 2
        assert len(err.strip().splitlines()) == 1
        sizes = [int(n) for n in re.findall(r"has (\d+)", err)]
        assert len(sizes) == 2 and sizes[0] != sizes[1]

    def test_ot_check(self, capsys):
        code, out, _ = run(capsys, "ot-check", "--n", 16, "--trials", 100)
        assert code == 0
        assert float(out.strip().split("=")[1]) < 1e-9

    def test_eval(self, capsys, built, tmp_path):
        code, out, _ = run(capsys, "eval", "--student_ckpt", built / "student.ckpt",
                           "--corpus", built / "answers.jsonl", "--out_dir", tmp_path)
        assert code == 0
        assert "perplexity=" in out
        assert (tmp_path / "eval.json").exists()

    def test_costed_trace(self, capsys, built, tmp_path):
        code, _, _ = run(capsys, "distill", "--mode", "uld_costed", "--cost_kind", "uniform01",
                         "--corpus", built / "answers.jsonl", "--teacher_ckpt",
                         built / "teacher.ckpt", "--pretrain_epochs", 0, *TINY,
                         "--out_dir", tmp_path)
        assert code == 0
        assert (tmp_path / "costed_trace.jsonl").read_text().count("\n") > 0

    def test_ablation_needs_zero(self, capsys, built, tmp_path):
        code, _, err = run(capsys, "ablate-lambda", "--lambdas", "0.5,1", "--corpus",
                           built / "answers.jsonl", "--teacher_ckpt", built / "teacher.ckpt",
                           "--out_dir", tmp_path)
        assert code == 1 and "lambdas" in err

    def test_bench(self, capsys, tmp_path):
        code, out, _ = run(capsys, "bench-ot", "--min_n", 16, "--max_n", 64, "--exact_min", 4,
                           "--exact_max", 16, "--repetitions", 1, "--out_dir", tmp_path)
        assert code == 0
        assert "closed_form slope=" in out
        assert (tmp_path / "bench.csv").read_text().startswith("method,n,rep,seconds")

    def test_missing_file_exit_2(self, capsys, tmp_path):
        code, _, _ = run(capsys, "vocab-overlap", "--probe", tmp_path / "none.vocab",
                         "--reference", tmp_path / "none.vocab")
        assert code == 2

    def test_missing_required_key(self, capsys):
        assert run(capsys, "gen-answers")[0] == 1


class TestConfig:
    def test_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("n_itemz = 5\n")
        code, _, err = run(capsys, "gen-corpus", "--config", cfg, "--out_dir", tmp_path)
        assert code == 1
        assert "n_itemz" in err and len(err.strip().splitlines()) == 1

    def test_bad_value(self, capsys, tmp_path):
        assert run(capsys, "gen-corpus", "--n_items", "many", "--out_dir", tmp_path)[0] == 1

    def test_flags_override_file(self, capsys, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# small corpus\nn_items = 5\nseed = 3  # trailing comment\n")
        run(capsys, "gen-corpus", "--config", cfg, "--n_items", 7, "--out_dir", tmp_path)
        assert len(read_jsonl(tmp_path / "corpus.jsonl")) == 7
        run(capsys, "gen-corpus", "--config", cfg, "--out-dir", tmp_path)
        assert len(read_jsonl(tmp_path / "corpus.jsonl")) == 5

    def test_resolve_precedence(self):
        s = cli.resolve("distill", {"lam": "2.0", "epochs": "3"}, {"lam": "0.5"})
        assert (s["lam"], s["epochs"], s["seed"]) == (0.5, 3, 0)

    def test_env_out_dir(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("ULD_OUT", str(tmp_path / "env"))
        assert run(capsys, "gen-corpus", "--n_items", 3)[0] == 0
        assert (tmp_path / "env" / "corpus.jsonl").exists()

    def test_every_command_uses_known_keys(self):
        for _, names, overrides in cli.COMMANDS.values():
            assert set(names) <= set(cli.KEYS)
            assert set(overrides) <= set(names)

    @pytest.mark.parametrize("command", sorted(cli.COMMANDS))
    def test_help_lists_every_key(self, capsys, command):
        with pytest.raises(SystemExit) as exc:
            cli.main([command, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        listed = re.findall(r"^  (\w+)\s{2,}", text.split("keys (")[1], flags=re.M)
        assert listed == cli.COMMANDS[command][1]


class TestDeterminism:
    def test_byte_identical_outputs(self, capsys, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        pipeline(capsys, a)
        pipeline(capsys, b)
        files = sorted(p.name for p in a.iterdir())
        assert files == sorted(p.name for p in b.iterdir())
        for name in files:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
