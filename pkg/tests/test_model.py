"""Tests for the hierarchical network: cell math, encoders, prediction, checkpoints."""

import numpy as np
import pytest

from topicspot import autodiff as ad
from topicspot.corpus import Vocab
from topicspot.errors import ValidationError
from topicspot.model import (LstmDirection, ModelConfig, dialog_loss,
                             encode_dialog, encode_utterance, forward_logits,
                             init_params, load_checkpoint, lstm_step, predict,
                             quantize_params, save_checkpoint)


def _vocab(n_tokens):
    tokens = ["<pad>", "<unk>"] + [f"t{i}" for i in range(n_tokens - 2)]
    return Vocab(id_to_token=tuple(tokens), token_to_id={t: i for i, t in enumerate(tokens)})


def tiny_params(attention=True, seed=0, n_topics=3):
    cfg = ModelConfig(embed_dim=8, hidden_dim=4, attention_dim=4,
                      attention_enabled=attention)
    return init_params(_vocab(20), [f"topic{i}" for i in range(n_topics)],
                       seed=seed, config=cfg), _vocab(20)


def _zero_direction(hidden, input_dim, forget_bias=1.0):
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = forget_bias
    return LstmDirection(W_ih=ad.tensor(np.zeros((4 * hidden, input_dim)), requires_grad=True),
                         W_hh=ad.tensor(np.zeros((4 * hidden, hidden)), requires_grad=True),
                         b=ad.tensor(b, requires_grad=True))


class TestLstmStep:
    def test_zero_weights_zero_state(self):
        # sigmoid(0)=0.5 gates but tanh(0)=0 candidate: c'=0, h'=0
        d = _zero_direction(hidden=3, input_dim=2)
        h, c = lstm_step(d, ad.tensor([1.0, -1.0]),
                         (ad.zeros(3), ad.zeros(3)))
        np.testing.assert_array_equal(c.data, np.zeros(3))
        np.testing.assert_array_equal(h.data, np.zeros(3))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        d = LstmDirection(
            W_ih=ad.tensor(rng.uniform(-0.5, 0.5, (8, 3)), requires_grad=True),
            W_hh=ad.tensor(rng.uniform(-0.5, 0.5, (8, 2)), requires_grad=True),
            b=ad.tensor(rng.uniform(-0.5, 0.5, 8), requires_grad=True))
        x = ad.tensor(rng.uniform(-1, 1, 3), requires_grad=True)

        def f():
            h, c = lstm_step(d, x, (ad.zeros(2), ad.zeros(2)))
            return ad.tensor_sum(ad.add(h, c))

        assert ad.grad_check(f, [d.W_ih, d.W_hh, d.b, x]) < 1e-5

    def test_three_steps_equal_composition(self):
        rng = np.random.default_rng(1)
        d = LstmDirection(
            W_ih=ad.tensor(rng.uniform(-0.5, 0.5, (8, 2)), requires_grad=True),
            W_hh=ad.tensor(rng.uniform(-0.5, 0.5, (8, 2)), requires_grad=True),
            b=ad.tensor(rng.uniform(-0.5, 0.5, 8), requires_grad=True))
        xs = [ad.tensor(rng.uniform(-1, 1, 2)) for _ in range(3)]
        state = (ad.zeros(2), ad.zeros(2))
        for x in xs:
            state = lstm_step(d, x, state)
        manual_h = state[0].data

        from topicspot.model import _run_direction
        assert np.array_equal(_run_direction(d, xs)[-1].data, manual_h)


class TestEncodeUtterance:
    def test_single_token_attention_is_one(self):
        params, _ = tiny_params()
        vectors = ad.tensor(np.random.default_rng(0).uniform(-1, 1, (1, 8)))
        pooled, weights = encode_utterance(params, vectors)
        np.testing.assert_allclose(weights.data, [1.0])
        assert pooled.data.shape == (8,)  # 2 * hidden_dim

    def test_attention_sums_to_one(self):
        params, _ = tiny_params()
        vectors = ad.tensor(np.random.default_rng(1).uniform(-1, 1, (7, 8)))
        _, weights = encode_utterance(params, vectors)
        assert abs(weights.data.sum() - 1.0) < 1e-9

    def test_single_step_ablation_matches_attention_free_pooling(self):
        # with L=1 the position state equals the final-state concatenation
        params_sa, _ = tiny_params(attention=True, seed=3)
        params_hn, _ = tiny_params(attention=False, seed=3)
        vectors = np.random.default_rng(2).uniform(-1, 1, (1, 8))
        pooled_sa, _ = encode_utterance(params_sa, ad.tensor(vectors))
        pooled_hn, _ = encode_utterance(params_hn, ad.tensor(vectors))
        np.testing.assert_allclose(pooled_sa.data, pooled_hn.data, atol=1e-12)

    def test_empty_utterance_rejected(self):
        params, _ = tiny_params()
        with pytest.raises(ValidationError):
            encode_utterance(params, ad.tensor(np.zeros((0, 8))))

    def test_gradient_through_attention(self):
        params, _ = tiny_params(seed=5)
        vectors = ad.tensor(np.random.default_rng(3).uniform(-1, 1, (3, 8)),
                            requires_grad=True)

        def f():
            pooled, _ = encode_utterance(params, vectors)
            return ad.tensor_sum(pooled)

        checked = [vectors, params.attention.W1, params.attention.b1,
                   params.attention.w2, params.attention.b2,
                   params.utt_encoder.fwd.W_ih]
        assert ad.grad_check(f, checked) < 1e-3


class TestEncodeDialog:
    def test_output_dim_is_twice_hidden(self):
        params, _ = tiny_params()
        reps = [ad.tensor(np.random.default_rng(i).uniform(-1, 1, 8)) for i in range(3)]
        out = encode_dialog(params, reps)
        assert out.data.shape == (8,)

    def test_single_utterance(self):
        params, _ = tiny_params()
        out = encode_dialog(params, [ad.tensor(np.ones(8) * 0.1)])
        assert np.all(np.isfinite(out.data))

    def test_order_sensitivity(self):
        params, _ = tiny_params(seed=9)
        rng = np.random.default_rng(4)
        reps = [ad.tensor(rng.uniform(-1, 1, 8)) for _ in range(3)]
        forward = encode_dialog(params, reps).data
        permuted = encode_dialog(params, reps[::-1]).data
        assert not np.allclose(forward, permuted)

    def test_empty_rejected(self):
        params, _ = tiny_params()
        with pytest.raises(ValidationError):
            encode_dialog(params, [])


class TestPredict:
    def test_zero_classifier_gives_uniform(self):
        params, _ = tiny_params()
        params.classifier.data[:] = 0.0
        pred = predict(params, [[2, 3, 4], [5, 6]])
        np.testing.assert_allclose(pred.probs, np.full(3, 1 / 3), atol=1e-12)

    def test_uniform_over_42(self):
        cfg = ModelConfig(embed_dim=4, hidden_dim=2, attention_dim=2)
        params = init_params(_vocab(10), [f"t{i}" for i in range(42)], seed=0, config=cfg)
        params.classifier.data[:] = 0.0
        pred = predict(params, [[2, 3]])
        np.testing.assert_allclose(pred.probs, np.full(42, 1 / 42), atol=1e-12)

    def test_tie_breaks_to_lowest_index(self):
        params, _ = tiny_params()
        params.classifier.data[:] = 0.0  # all logits equal -> all probs tie
        pred = predict(params, [[2, 3]])
        assert pred.label_index == 0
        assert pred.label == params.topics[0]

    def test_probs_sum_to_one(self):
        params, _ = tiny_params(seed=8)
        pred = predict(params, [[2, 3, 4]])
        assert abs(pred.probs.sum() - 1.0) < 1e-6

    def test_repeated_calls_bit_identical(self):
        params, _ = tiny_params(seed=2)
        a = predict(params, [[2, 3, 4], [5]])
        b = predict(params, [[2, 3, 4], [5]])
        assert np.array_equal(a.probs, b.probs)

    def test_attention_returned_per_utterance(self):
        params, _ = tiny_params()
        pred = predict(params, [[2, 3, 4], [5, 6]])
        assert [len(a) for a in pred.attention] == [3, 2]

    def test_empty_dialog_rejected(self):
        params, _ = tiny_params()
        with pytest.raises(ValidationError):
            predict(params, [])
        with pytest.raises(ValidationError):
            predict(params, [[]])

    def test_truncation_caps_apply(self):
        cfg = ModelConfig(embed_dim=4, hidden_dim=2, attention_dim=2,
                          max_utterance_tokens=3, max_dialog_utterances=2)
        params = init_params(_vocab(10), ["a", "b"], seed=0, config=cfg)
        long_input = [[2] * 10, [3] * 10, [4] * 10]
        short_input = [[2] * 3, [3] * 3]
        np.testing.assert_array_equal(predict(params, long_input).probs,
                                      predict(params, short_input).probs)


class TestInitParams:
    def test_same_seed_bit_identical(self):
        p1, _ = tiny_params(seed=5)
        p2, _ = tiny_params(seed=5)
        for (n1, t1), (n2, t2) in zip(p1.named_parameters(), p2.named_parameters()):
            assert n1 == n2
            assert np.array_equal(t1.data, t2.data), n1

    def test_different_seed_differs(self):
        p1, _ = tiny_params(seed=5)
        p2, _ = tiny_params(seed=6)
        assert not np.array_equal(p1.classifier.data, p2.classifier.data)

    def test_forget_bias_slice_is_one(self):
        params, _ = tiny_params()
        h = params.config.hidden_dim
        for enc in (params.utt_encoder, params.dlg_encoder):
            for d in (enc.fwd, enc.bwd):
                np.testing.assert_array_equal(d.b.data[h:2 * h], np.ones(h))
                np.testing.assert_array_equal(d.b.data[:h], np.zeros(h))

    def test_classifier_shape(self):
        params, _ = tiny_params(n_topics=5)
        assert params.classifier.data.shape == (5, 8)

    def test_glorot_bounds(self):
        params, _ = tiny_params()
        w = params.utt_encoder.fwd.W_ih
        limit = np.sqrt(6.0 / (8 + 16))
        assert np.abs(w.data).max() <= limit


class TestCheckpoint:
    def test_roundtrip_reproduces_quantized_predictions(self, tmp_path):
        params, vocab = tiny_params(seed=4)
        ids = [[2, 3, 4], [5, 6]]
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path, vocab)
        loaded = load_checkpoint(path, vocab)
        quantized = quantize_params(params)
        np.testing.assert_array_equal(predict(loaded, ids).probs,
                                      predict(quantized, ids).probs)

    def test_save_load_save_is_stable(self, tmp_path):
        params, vocab = tiny_params(seed=4)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(params, p1, vocab)
        save_checkpoint(load_checkpoint(p1, vocab), p2, vocab)
        assert p1.read_bytes() == p2.read_bytes()

    def test_vocab_hash_mismatch_rejected(self, tmp_path):
        params, vocab = tiny_params()
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path, vocab)
        with pytest.raises(ValidationError):
            load_checkpoint(path, _vocab(21))

    def test_preserves_config_and_topics(self, tmp_path):
        params, vocab = tiny_params(attention=False, seed=1)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path, vocab)
        loaded = load_checkpoint(path, vocab)
        assert loaded.config == params.config
        assert loaded.topics == params.topics

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
        _, vocab = tiny_params()
        with pytest.raises(ValidationError):
            load_checkpoint(path, vocab)


class TestEndToEndGradients:
    def test_tiny_model_gradcheck(self):
        params, _ = tiny_params(seed=0)
        ids = [[2, 3, 4], [5, 6, 7]]

        def f():
            loss, _ = dialog_loss(params, ids, label_index=1)
            return loss

        assert ad.grad_check(f, params.parameters()) < 1e-3

    def test_ablation_gradcheck(self):
        params, _ = tiny_params(attention=False, seed=1)
        ids = [[2, 3, 4], [5, 6, 7]]

        def f():
            loss, _ = dialog_loss(params, ids, label_index=0)
            return loss

        checked = [t for n, t in params.named_parameters() if not n.startswith("attention")]
        assert ad.grad_check(f, checked) < 1e-3

    def test_logits_are_finite(self):
        params, _ = tiny_params(seed=7)
        logits, _ = forward_logits(params, [[2, 3], [4]])
        assert np.all(np.isfinite(logits.data))
