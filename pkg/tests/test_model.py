import numpy as np
import pytest

from uldistill import autodiff as ad
from uldistill.distributions import softmax_temp
from uldistill.errors import CompatibilityError, FormatError, ParameterError
from uldistill.losses import ce_grad_rows, ce_rows
from uldistill.model import (
    ModelConfig,
    TinyCausalLM,
    check_compatible,
    from_bytes,
    greedy_generate,
    greedy_generate_batch,
    init,
    load,
    save,
    to_bytes,
)
from uldistill.optim import Adam, one_cycle_lr
from uldistill.tokenizer import char_tokenizer

CFG = ModelConfig(vocab_size=11, context_len=16, d_model=16, n_heads=2, n_layers=2, seed=3)


def lm_step(model, ids, opt=None, lr=1e-3):
    """One next-token CE step over every position; returns the pre-step loss."""
    ids = np.atleast_2d(ids)
    model.zero_grad()
    with ad.Tape() as tape:
        logits = model.forward(ids[:, :-1])
        rows = logits.data.reshape(-1, logits.shape[-1]).astype(np.float64)
        gold = ids[:, 1:].reshape(-1)
        p = softmax_temp(rows)
        loss = ce_rows(p, gold).mean()
        g = (ce_grad_rows(p, gold) / len(gold)).reshape(logits.shape).astype(np.float32)
        out = ad.external_loss(logits, loss, g)
    ad.backward(tape, out)
    if opt is not None:
        opt.step(lr)
    return float(loss)


@pytest.fixture(scope="module")
def pattern_model():
    tok = char_tokenizer("ab")
    model = TinyCausalLM(ModelConfig(len(tok), 16, 16, 2, 2, seed=0))
    ids = np.array([tok.vocab.bos_id] + tok.encode("ab" * 7 + "a"))
    opt = Adam(model.parameters())
    for step in range(150):
        lm_step(model, ids, opt, one_cycle_lr(step, 150, 1e-2))
    return model, tok


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(vocab_size=0), dict(vocab_size=5, d_model=10, n_heads=3),
        dict(vocab_size=5, context_len=1), dict(vocab_size=5, seed=-1),
        dict(vocab_size=5, seed=2**24), dict(vocab_size=5, n_layers=0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            ModelConfig(**kwargs)

    def test_defaults(self):
        cfg = ModelConfig(vocab_size=5)
        assert (cfg.n_layers, cfg.d_model % cfg.n_heads) == (2, 0)


class TestInit:
    def test_same_seed_identical(self):
        a, b = init(CFG), init(CFG)
        for (na, ta), (nb, tb) in zip(a.params.items(), b.params.items()):
            assert na == nb
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_different_seed(self):
        other = ModelConfig(11, 16, 16, 2, 2, seed=4)
        assert not np.array_equal(init(CFG).params["tok_emb"].data,
                                  init(other).params["tok_emb"].data)

    def test_scale_and_gains(self):
        m = init(CFG)
        assert abs(m.params["tok_emb"].data.std() - 0.02) < 0.005
        np.testing.assert_array_equal(m.params["ln_f"].data, 1.0)
        assert all(t.data.dtype == np.float32 for t in m.parameters())

    def test_finite_logits(self):
        ids = np.random.default_rng(0).integers(0, 11, size=(3, 16))
        assert np.all(np.isfinite(init(CFG).logits(ids)))

    def test_zero_output_projection_uniform(self):
        m = init(CFG)
        m.params["ln_f"].data[:] = 0.0
        p = softmax_temp(m.logits(np.arange(5)).astype(np.float64))
        np.testing.assert_allclose(p, np.full((5, 11), 1 / 11), atol=1e-15)


class TestForward:
    def test_shape(self):
        m = init(CFG)
        assert m.logits(np.arange(7)).shape == (7, 11)
        assert m.logits(np.zeros((2, 7), dtype=int)).shape == (2, 7, 11)

    def test_too_long(self):
        with pytest.raises(ParameterError):
            init(CFG).logits(np.zeros(17, dtype=int))

    def test_causal_random_perturbations(self):
        m = init(CFG)
        rng = np.random.default_rng(1)
        for _ in range(1000):
            ids = rng.integers(0, 11, size=16)
            k = int(rng.integers(16))
            other = ids.copy()
            other[k] = (ids[k] + 1 + rng.integers(10)) % 11
            both = m.logits(np.stack([ids, other]))
            np.testing.assert_array_equal(both[0, :k], both[1, :k])

    def test_one_step_decreases_loss(self):
        m = init(CFG)
        ids = np.random.default_rng(2).integers(0, 11, size=(4, 12))
        before = lm_step(m, ids, Adam(m.parameters()), lr=1e-3)
        assert lm_step(m, ids) < before

    def test_memorizes_pattern(self, pattern_model):
        model, tok = pattern_model
        ids = [tok.vocab.bos_id] + tok.encode("abab")
        assert int(np.argmax(model.logits(np.array(ids))[-1])) == tok.vocab.index["a"]


class TestGenerate:
    def test_zero_new(self):
        assert greedy_generate(init(CFG), [1, 5, 6], 0) == [1, 5, 6]

    def test_deterministic(self):
        m = init(CFG)
        assert greedy_generate(m, [1, 5], 6) == greedy_generate(m, [1, 5], 6)

    def test_continues_pattern(self, pattern_model):
        model, tok = pattern_model
        prompt = [tok.vocab.bos_id] + tok.encode("abab")
        out = greedy_generate(model, prompt, 8)
        assert tok.decode(out[len(prompt):]) == "abababab"

    def test_stops_at_eos(self):
        m = init(CFG)
        free = greedy_generate(m, [1], 5)
        stop = free[1]
        assert greedy_generate(m, [1], 5, eos_id=stop) == [1, stop]

    def test_batch_matches_single(self):
        m = init(CFG)
        prompts = [[1, 4], [1, 5, 6, 7], [1]]
        batch = greedy_generate_batch(m, prompts, 5, eos_id=2)
        assert batch == [greedy_generate(m, p, 5, eos_id=2) for p in prompts]

    def test_respects_context(self):
        out = greedy_generate(init(CFG), list(range(10)), 100)
        assert len(out) == CFG.context_len

    def test_overlong_prompt(self):
        with pytest.raises(ParameterError):
            greedy_generate(init(CFG), [1] * 17, 1)


class TestCheckpoint:
    def test_round_trip_bytes(self, tmp_path):
        m = init(CFG)
        path = tmp_path / "m.ckpt"
        save(m, path)
        back = load(path)
        assert back.config == CFG
        assert to_bytes(back) == path.read_bytes()
        ids = np.arange(9)
        np.testing.assert_array_equal(back.logits(ids), m.logits(ids))

    def test_layout(self):
        raw = to_bytes(init(CFG))
        assert raw[:4] == b"ULDC"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == len("config")
        assert raw[12:18] == b"config"

    def test_bad_magic(self):
        raw = bytearray(to_bytes(init(CFG)))
        raw[0:4] = b"NOPE"
        with pytest.raises(FormatError) as exc:
            from_bytes(bytes(raw))
        assert exc.value.field == "magic"

    def test_bad_version(self):
        raw = bytearray(to_bytes(init(CFG)))
        raw[4] = 9
        with pytest.raises(FormatError) as exc:
            from_bytes(bytes(raw))
        assert exc.value.field == "version"

    def test_truncated(self):
        raw = to_bytes(init(CFG))
        with pytest.raises(FormatError) as exc:
            from_bytes(raw[:-10])
        assert exc.value.field.startswith("tensor:")

    def test_trailing(self):
        with pytest.raises(FormatError) as exc:
            from_bytes(to_bytes(init(CFG)) + b"\0")
        assert exc.value.field == "trailing"

    def test_digest_stable(self):
        assert init(CFG).digest() == init(CFG).digest()

    def test_vocab_compatibility(self):
        with pytest.raises(CompatibilityError):
            check_compatible(init(CFG), char_tokenizer("ab"))
        m = init(ModelConfig(vocab_size=6, context_len=4, d_model=8, n_heads=2))
        assert check_compatible(m, char_tokenizer("ab")) is m


class TestSchedule:
    def test_shape(self):
        lrs = [one_cycle_lr(s, 100, 1.0) for s in range(101)]
        assert lrs[0] == 0.5
        assert max(lrs) == pytest.approx(1.0)
        assert int(np.argmax(lrs)) == 30
        assert lrs[100] == pytest.approx(0.1)
        assert all(a <= b for a, b in zip(lrs[:30], lrs[1:31]))
        assert all(a >= b for a, b in zip(lrs[30:], lrs[31:]))
