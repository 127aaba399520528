import numpy as np
import pytest

from uga import autodiff as ad
from uga import gradcheck as gc
from uga.evidential import NigOutput
from uga.models import (
    MlpSpec,
    ModelBundle,
    SeqEncoderSpec,
    build_bundle,
    load_checkpoint,
    mlp_forward,
    model_forward,
    save_checkpoint,
    seq_forward,
)


def zero_params(bundle):
    for t in bundle.params.values():
        t.data[...] = 0.0
    return bundle


class TestSpecs:
    def test_mlp_spec_validation(self):
        with pytest.raises(ValueError):
            MlpSpec(layer_widths=(3,))
        with pytest.raises(ValueError):
            MlpSpec(layer_widths=(3, 0))
        with pytest.raises(ValueError):
            MlpSpec(layer_widths=(3, 4), activation="relu")
        with pytest.raises(ValueError):
            MlpSpec(layer_widths=(3, 4), dropout_p=1.0)

    def test_seq_spec_defaults(self):
        spec = SeqEncoderSpec()
        assert (spec.num_layers, spec.hidden_dim, spec.input_dim,
                spec.window_len) == (2, 64, 3, 100)

    def test_seq_spec_validation(self):
        with pytest.raises(ValueError):
            SeqEncoderSpec(hidden_dim=0)


class TestParameterCounts:
    def test_mlp_formula(self):
        widths = (3, 5, 4)
        bundle = build_bundle(MlpSpec(layer_widths=widths), seed=1)
        got = sum(t.data.size for n, t in bundle.named_parameters()
                  if n.startswith("mlp."))
        want = sum(a * b + b for a, b in zip(widths, widths[1:]))
        assert got == want == 44

    def test_lstm_formula(self):
        spec = SeqEncoderSpec()
        bundle = build_bundle(spec, seed=1)
        h, d = spec.hidden_dim, spec.input_dim
        per_layer = [4 * (h * (d + h) + h), 4 * (h * (h + h) + h)]
        for layer, want in enumerate(per_layer):
            got = sum(t.data.size for n, t in bundle.named_parameters()
                      if n.startswith(f"lstm.{layer}."))
            assert got == want
        assert per_layer == [17408, 33024]

    def test_head_dims(self):
        spec = MlpSpec(layer_widths=(3, 4))
        assert build_bundle(spec, "evidential").params["head.W"].shape == (4, 4)
        assert build_bundle(spec, "point").params["head.W"].shape == (4, 1)
        with pytest.raises(ValueError):
            build_bundle(spec, "quantile")


class TestInitialization:
    def test_seeded_reproducibility(self):
        a = build_bundle(MlpSpec(layer_widths=(3, 8, 4)), seed=7)
        b = build_bundle(MlpSpec(layer_widths=(3, 8, 4)), seed=7)
        for (na, ta), (nb, tb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            assert np.array_equal(ta.data, tb.data)
        c = build_bundle(MlpSpec(layer_widths=(3, 8, 4)), seed=8)
        assert not np.array_equal(a.params["mlp.0.W"].data,
                                  c.params["mlp.0.W"].data)

    def test_weight_range(self):
        bundle = build_bundle(MlpSpec(layer_widths=(16, 8)), seed=3)
        w = bundle.params["mlp.0.W"].data
        assert np.all(np.abs(w) <= 1.0 / 4.0)

    def test_forget_gate_bias(self):
        spec = SeqEncoderSpec(hidden_dim=5, input_dim=2, window_len=4)
        bundle = build_bundle(spec, seed=0)
        b = bundle.params["lstm.0.b"].data[0]
        np.testing.assert_array_equal(b[5:10], np.ones(5))
        np.testing.assert_array_equal(b[:5], np.zeros(5))
        np.testing.assert_array_equal(b[10:], np.zeros(10))


class TestMlpForward:
    def test_zero_weights_constant_map(self):
        bundle = zero_params(build_bundle(MlpSpec(layer_widths=(3, 4),
                                                  activation="sigmoid"), seed=0))
        z = mlp_forward(np.zeros((2, 3)), bundle)
        np.testing.assert_array_equal(z.data, np.full((2, 4), 0.5))

    def test_dropout_disabled_matches(self):
        bundle = build_bundle(MlpSpec(layer_widths=(3, 6, 4), dropout_p=0.0), seed=2)
        x = np.random.default_rng(0).normal(size=(5, 3))
        train = mlp_forward(x, bundle, training=True,
                            rng=np.random.default_rng(1))
        eval_ = mlp_forward(x, bundle, training=False)
        np.testing.assert_array_equal(train.data, eval_.data)

    def test_inverted_dropout_scale(self):
        bundle = build_bundle(MlpSpec(layer_widths=(3, 50), dropout_p=0.5), seed=2)
        x = np.random.default_rng(0).normal(size=(4, 3))
        base = mlp_forward(x, bundle, training=False)
        dropped = mlp_forward(x, bundle, training=True,
                              rng=np.random.default_rng(9))
        ratio = np.where(base.data != 0, dropped.data / base.data, 0.0)
        kept = ratio[dropped.data != 0]
        np.testing.assert_allclose(kept, 2.0, rtol=1e-12)
        assert np.any(dropped.data == 0)

    def test_dropout_needs_rng(self):
        bundle = build_bundle(MlpSpec(layer_widths=(3, 4), dropout_p=0.1), seed=2)
        with pytest.raises(ValueError):
            mlp_forward(np.zeros((1, 3)), bundle, training=True)

    def test_input_dim_check(self):
        bundle = build_bundle(MlpSpec(layer_widths=(3, 4)), seed=2)
        with pytest.raises(ad.ShapeError):
            mlp_forward(np.zeros((2, 5)), bundle)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        bundle = build_bundle(MlpSpec(layer_widths=(3, 8, 4), dropout_p=0.0), seed=4)
        x = rng.normal(size=(6, 3))

        def build(_):
            return ad.sum(ad.tanh(mlp_forward(x, bundle)))

        assert gc.compare(build, bundle.parameters()) < 1e-5


class TestSeqForward:
    def miniature(self, **kw):
        spec = SeqEncoderSpec(num_layers=2, hidden_dim=3, input_dim=2,
                              window_len=8, **kw)
        return spec, build_bundle(spec, seed=5)

    def test_zero_weights_zero_output(self):
        spec, bundle = self.miniature()
        zero_params(bundle)
        z = seq_forward(np.random.default_rng(0).normal(size=(2, 8, 2)), bundle)
        np.testing.assert_array_equal(z.data, np.zeros((2, 3)))

    def test_constant_window_time_reversal_invariant(self):
        spec, bundle = self.miniature()
        w = np.tile(np.array([0.3, -0.7]), (8, 1))
        z_fwd = seq_forward(w, bundle)
        z_rev = seq_forward(w[::-1].copy(), bundle)
        np.testing.assert_array_equal(z_fwd.data, z_rev.data)

    def test_varying_window_reversal_differs(self):
        spec, bundle = self.miniature()
        rng = np.random.default_rng(3)
        w = rng.normal(size=(8, 2))
        assert not np.allclose(seq_forward(w, bundle).data,
                               seq_forward(w[::-1].copy(), bundle).data)

    def test_window_shape_check(self):
        spec, bundle = self.miniature()
        with pytest.raises(ad.ShapeError):
            seq_forward(np.zeros((2, 7, 2)), bundle)
        with pytest.raises(ad.ShapeError):
            seq_forward(np.zeros((2, 8, 3)), bundle)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        spec = SeqEncoderSpec(num_layers=2, hidden_dim=3, input_dim=2,
                              window_len=10)
        bundle = build_bundle(spec, seed=6)
        w = rng.normal(size=(2, 10, 2))

        def build(_):
            return ad.sum(seq_forward(w, bundle))

        assert gc.compare(build, bundle.parameters()) < 1e-4


class TestModelForward:
    def test_constant_head_on_zero_weights(self):
        bundle = zero_params(build_bundle(MlpSpec(layer_widths=(2, 3)), seed=0))
        bundle.params["head.b"].data[...] = np.array([[0.5, 0.1, -0.2, 0.3]])
        rng = np.random.default_rng(1)
        _z, p = model_forward(rng.normal(size=(4, 2)), bundle)
        assert np.allclose(p.gamma.data, 0.5)
        assert p.nu.data.std() == 0.0

    def test_output_invariants_random(self):
        rng = np.random.default_rng(17)
        bundle = build_bundle(MlpSpec(layer_widths=(3, 6, 4)), seed=9)
        _z, p = model_forward(rng.normal(size=(32, 3)), bundle)
        p.validate()
        assert isinstance(p, NigOutput)

    def test_batch_order_preserved(self):
        rng = np.random.default_rng(19)
        bundle = build_bundle(MlpSpec(layer_widths=(3, 5, 4)), seed=10)
        xs = rng.normal(size=(6, 3))
        _z, p_batch = model_forward(xs, bundle)
        singles = [model_forward(xs[i:i + 1], bundle)[1].gamma.item()
                   for i in range(6)]
        np.testing.assert_allclose(p_batch.gamma.data.ravel(), singles, rtol=1e-12)

    def test_point_head_shape(self):
        bundle = build_bundle(MlpSpec(layer_widths=(3, 4)), head_kind="point", seed=0)
        _z, pred = model_forward(np.zeros((5, 3)), bundle)
        assert isinstance(pred, ad.Tensor)
        assert pred.shape == (5, 1)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        bundle = build_bundle(MlpSpec(layer_widths=(3, 6, 4)), seed=21)
        path = tmp_path / "model.ckpt"
        save_checkpoint(bundle, path)
        loaded = load_checkpoint(path)
        assert loaded.spec == bundle.spec
        assert loaded.head_kind == bundle.head_kind
        for (na, ta), (nb, tb) in zip(bundle.named_parameters(),
                                      loaded.named_parameters()):
            assert na == nb
            assert np.array_equal(ta.data, tb.data)

    def test_round_trip_seq(self, tmp_path):
        spec = SeqEncoderSpec(num_layers=2, hidden_dim=4, input_dim=3,
                              window_len=6)
        bundle = build_bundle(spec, head_kind="point", seed=22)
        path = tmp_path / "seq.ckpt"
        save_checkpoint(bundle, path)
        loaded = load_checkpoint(path)
        assert loaded.spec == spec
        assert loaded.head_kind == "point"
        out_a = seq_forward(np.ones((1, 6, 3)), bundle)
        out_b = seq_forward(np.ones((1, 6, 3)), loaded)
        np.testing.assert_array_equal(out_a.data, out_b.data)

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_truncated_blob_rejected(self, tmp_path):
        bundle = build_bundle(MlpSpec(layer_widths=(2, 3)), seed=0)
        path = tmp_path / "trunc.ckpt"
        save_checkpoint(bundle, path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ValueError):
            load_checkpoint(path)
