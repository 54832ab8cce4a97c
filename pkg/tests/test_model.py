"""Network components: branching, length prediction, parallel decoding,
checkpoint format."""

import numpy as np
import pytest

from dialectmt import autodiff as ad
from dialectmt.autodiff import Tensor
from dialectmt.errors import CheckpointError, ConfigError, DimensionError, EmptyInputError
from dialectmt.model import (
    ModelConfig,
    _attention,
    collapse_repeats,
    count_ffn_multadds,
    count_ffn_params,
    decode_parallel,
    encode,
    init_decoder_inputs,
    init_params,
    load_checkpoint,
    multibranch_self_block,
    predict_length,
    save_checkpoint,
    translate,
)
from dialectmt.textproc import SegmentedSentence, TokenSeq, build_vocab


def small_config(**kw):
    defaults = dict(d_model=8, n_branches=2, n_heads=2, n_layers=1,
                    d_seg=4, max_len=32, length_offset_range=4, vocab_size=12)
    defaults.update(kw)
    return ModelConfig(**defaults)


def sent(ids, flags=None):
    ids = list(ids)
    return SegmentedSentence(tokens=TokenSeq(ids=ids, text="x" * len(ids)),
                             boundary_flags=flags or [1] * len(ids),
                             words=["x"] * len(ids))


class TestConfig:
    def test_valid(self):
        assert small_config().validate() is not None

    @pytest.mark.parametrize("kw", [
        dict(d_model=9, n_branches=2),
        dict(d_model=8, n_branches=2, n_heads=3),
        dict(n_layers=0),
        dict(model_type="rnn"),
        dict(seg_side="middle"),
        dict(vocab_size=3),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            small_config(**kw).validate()


def reference_mha(x, params, prefix, n_heads):
    """Plain numpy multi-head attention, written independently of the graph ops."""
    q = x @ params[f"{prefix}.wq"].data + params[f"{prefix}.bq"].data
    k = x @ params[f"{prefix}.wk"].data + params[f"{prefix}.bk"].data
    v = x @ params[f"{prefix}.wv"].data + params[f"{prefix}.bv"].data
    dh = q.shape[1] // n_heads
    parts = []
    for h in range(n_heads):
        qh, kh, vh = (m[:, h * dh:(h + 1) * dh] for m in (q, k, v))
        scores = qh @ kh.T / np.sqrt(dh)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        parts.append((e / e.sum(axis=1, keepdims=True)) @ vh)
    return np.concatenate(parts, axis=1) @ params[f"{prefix}.wo"].data \
        + params[f"{prefix}.bo"].data


class TestAttention:
    def test_single_branch_matches_numpy_reference(self):
        config = small_config(n_branches=1)
        params = init_params(config, seed=3)
        x = np.random.default_rng(4).standard_normal((5, config.d_model))
        got = _attention(Tensor(x), Tensor(x), params, "enc.l0.b0.self",
                         config.n_heads, None).data
        want = reference_mha(x, params, "enc.l0.b0.self", config.n_heads)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_single_position_attention_is_one(self):
        config = small_config()
        params = init_params(config, seed=0)
        enc = encode(sent([5]), params)
        out = decode_parallel(init_decoder_inputs(enc, 1, config), enc, params)
        np.testing.assert_allclose(out.cross_attention.data, [[1.0]])

    def test_self_block_permutation_equivariance(self):
        # no positions are injected inside a block, so permuting rows of the
        # input permutes rows of the output
        config = small_config()
        params = init_params(config, seed=1)
        x = np.random.default_rng(2).standard_normal((6, config.d_model))
        perm = np.random.default_rng(3).permutation(6)
        base = multibranch_self_block(Tensor(x), params, "enc.l0", config, None).data
        permuted = multibranch_self_block(Tensor(x[perm]), params, "enc.l0",
                                          config, None).data
        np.testing.assert_allclose(permuted, base[perm], atol=1e-10)

    def test_block_gradients(self):
        config = small_config()
        params = init_params(config, seed=5)

        def block(x):
            return multibranch_self_block(x, params, "enc.l0", config, None)

        assert ad.gradient_check(block, [(4, config.d_model)], tolerance=1e-4).passed


class TestCosts:
    def test_documented_counts(self):
        config = ModelConfig(d_model=300, n_branches=2, vocab_size=12)
        baseline, multi = count_ffn_multadds(config, seq_len=10)
        assert baseline == 7_200_000
        assert multi == 3_600_000

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_ratio_equals_branch_count(self, n):
        config = ModelConfig(d_model=30, n_branches=n, n_heads=1, vocab_size=12)
        baseline, multi = count_ffn_multadds(config, seq_len=7)
        assert baseline == multi * n
        pb, pm = count_ffn_params(config)
        assert pm * n == pb


class TestEncode:
    def test_output_shape_and_pool(self):
        config = small_config()
        params = init_params(config, seed=0)
        enc = encode(sent([5, 6, 7]), params)
        assert enc.states.shape == (3, config.d_model)
        assert enc.pooled.shape == (1, config.d_model)
        np.testing.assert_allclose(enc.pooled.data[0],
                                   enc.states.data.mean(axis=0))

    def test_empty_sentence(self):
        params = init_params(small_config(), seed=0)
        with pytest.raises(EmptyInputError):
            encode(sent([]), params)

    def test_all_padding(self):
        params = init_params(small_config(), seed=0)
        with pytest.raises(EmptyInputError):
            encode(sent([5, 6]), params, mask=np.zeros(2, dtype=bool))

    def test_padding_does_not_leak(self):
        params = init_params(small_config(), seed=0)
        short = encode(sent([5, 6, 7]), params)
        padded = encode(sent([5, 6, 7, 8, 9]), params,
                        mask=np.array([1, 1, 1, 0, 0], dtype=bool))
        np.testing.assert_allclose(padded.states.data[:3], short.states.data,
                                   atol=1e-10)
        np.testing.assert_allclose(padded.pooled.data, short.pooled.data,
                                   atol=1e-10)

    def test_over_length_truncated(self):
        config = small_config(max_len=4)
        params = init_params(config, seed=0)
        enc = encode(sent([5] * 9), params)
        assert enc.truncated and enc.states.shape[0] == 4


class TestPredictLength:
    def _pin_length_head(self, params, classes, value=5.0):
        k = params.config.length_offset_range
        params["len.w"].data[:] = 0.0
        params["len.b"].data[:] = 0.0
        for c in classes:
            params["len.b"].data[k + c] = value

    def test_offset_arithmetic(self):
        params = init_params(small_config(), seed=0)
        self._pin_length_head(params, [2])
        assert predict_length(encode(sent([5, 6, 7]), params), params) == 5

    def test_tie_prefers_smaller_offset(self):
        params = init_params(small_config(), seed=0)
        self._pin_length_head(params, [-1, 3])
        assert predict_length(encode(sent([5, 6, 7]), params), params) == 2

    def test_clamped_to_at_least_one(self):
        params = init_params(small_config(), seed=0)
        self._pin_length_head(params, [-4])
        assert predict_length(encode(sent([5, 6]), params), params) == 1

    def test_clamped_to_max_len(self):
        config = small_config(max_len=6)
        params = init_params(config, seed=0)
        self._pin_length_head(params, [4])
        assert predict_length(encode(sent([5] * 5), params), params) == 6


class TestDecoderInit:
    def test_uniform_copy_indices(self):
        params = init_params(small_config(), seed=0)
        enc = encode(sent([5, 6]), params)
        dec_in = init_decoder_inputs(enc, 4, params.config)
        # floor(t*2/4) for t=0..3 -> rows 0,0,1,1
        np.testing.assert_allclose(dec_in.data,
                                   enc.states.data[[0, 0, 1, 1]])

    def test_single_target_uses_first_state(self):
        params = init_params(small_config(), seed=0)
        enc = encode(sent([5, 6, 7]), params)
        np.testing.assert_allclose(init_decoder_inputs(enc, 1, params.config).data,
                                   enc.states.data[[0]])

    def test_length_out_of_range(self):
        params = init_params(small_config(), seed=0)
        enc = encode(sent([5]), params)
        for bad in (0, params.config.max_len + 1):
            with pytest.raises(DimensionError):
                init_decoder_inputs(enc, bad, params.config)


class TestDecodeParallel:
    def test_shapes_and_attention_rows(self):
        config = small_config()
        params = init_params(config, seed=0)
        enc = encode(sent([5, 6, 7]), params)
        out = decode_parallel(init_decoder_inputs(enc, 4, config), enc, params)
        assert out.logits.shape == (4, config.vocab_size)
        assert out.cross_attention.shape == (4, 3)
        np.testing.assert_allclose(out.cross_attention.data.sum(axis=1), 1.0,
                                   atol=1e-9)
        assert len(out.predicted_ids) == 4

    def test_masked_source_gets_no_attention(self):
        config = small_config()
        params = init_params(config, seed=0)
        enc = encode(sent([5, 6, 7]), params,
                     mask=np.array([1, 1, 0], dtype=bool))
        out = decode_parallel(init_decoder_inputs(enc, 3, config), enc, params)
        np.testing.assert_allclose(out.cross_attention.data[:, 2], 0.0, atol=1e-12)


class TestCollapseRepeats:
    @pytest.mark.parametrize("ids,want", [
        ([], []),
        ([7], [7]),
        ([7, 7, 8, 8, 8, 7], [7, 8, 7]),
        ([1, 2, 3], [1, 2, 3]),
    ])
    def test_examples(self, ids, want):
        assert collapse_repeats(ids) == want


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = init_params(small_config(), seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path, expect_config=params.config)
        assert set(loaded.tensors) == set(params.tensors)
        for name, tensor in params.items():
            np.testing.assert_array_equal(loaded[name].data, tensor.data)

    def test_save_is_bit_identical(self, tmp_path):
        params = init_params(small_config(), seed=0)
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(params, a)
        save_checkpoint(params, b)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTAMODEL")
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        params = init_params(small_config(), seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path)
        path.write_bytes(path.read_bytes()[:-17])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        params = init_params(small_config(), seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_config_mismatch(self, tmp_path):
        params = init_params(small_config(), seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path)
        with pytest.raises(CheckpointError, match="config"):
            load_checkpoint(path, expect_config=small_config(max_len=64))


class TestTranslate:
    def _setup(self):
        vocab = build_vocab([("我们去", "我哋去")])
        config = small_config(vocab_size=len(vocab))
        return init_params(config, seed=0), vocab

    def test_empty_input(self):
        params, vocab = self._setup()
        result = translate("", params, vocab)
        assert result.text == "" and result.token_ids == []

    def test_guarded_span_survives_untrained_model(self):
        params, vocab = self._setup()
        result = translate("我们去 https://a.com", params, vocab)
        assert "https://a.com" in result.text

    def test_forced_length(self):
        params, vocab = self._setup()
        result = translate("我们去", params, vocab, collapse=False, forced_length=5)
        assert result.predicted_length == 5
        assert len(result.token_ids) == 5
