import math

import numpy as np
import pytest
from toy import ALIGNED, ENC_DEC, LETTERS, PHONES, aligned, examples_for, tiny_model

from g2plstm.lexicon import SymbolTable, VocabularyError
from g2plstm.models import ConfigError, ModelConfig, build_model, forward_teacher_forced
from g2plstm.models.training import mean_cross_entropy
from g2plstm.nn import grad_check, sgd_apply


def summed_loss(model, examples):
    """Total loss and gradients over examples of mixed shapes, kept at model precision."""
    groups = {}
    for ex in (model.encode_example(e) for e in examples):
        groups.setdefault(model.example_shape(ex), []).append(ex)

    def fn(params):
        total, grads = 0, None
        for shape in sorted(groups):
            loss, g = model.loss_and_grads(groups[shape], params=params)
            total = total + loss
            grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
        return total, grads

    return fn


GRAD_CASES = [
    ("enc-dec", 1, 3),
    ("enc-dec", 2, 3),
    ("uni", 1, 1),
    ("uni", 1, 3),
    ("uni", 2, 3),
    ("bi", 1, 1),
    ("bi", 1, 3),
    ("bi", 2, 1),
]


class TestGradients:
    @pytest.mark.parametrize("arch, layers, window", GRAD_CASES)
    def test_matches_finite_differences(self, arch, layers, window):
        model = tiny_model(arch, layers, window).astype(np.longdouble)
        fn = summed_loss(model, examples_for(model))
        assert grad_check(fn, model.params, 1e-5) < 1e-4


class TestShapes:
    def test_parameter_count_hand_computed(self):
        letters = SymbolTable.from_observed("letter", "AB")
        phones = SymbolTable.from_observed("phoneme", ["X", "Y"])
        model = build_model(ModelConfig("uni", 2, 2, 3, window=1), letters, phones)
        # emb 4*2 + 5*2, cell 12*(2+2) + 12*3 + 12, out 5*3 + 5
        assert model.parameter_count() == 134
        assert model.parameter_count() == sum(p.size for p in model.params.values())

    def test_enc_dec_two_layers(self):
        model = tiny_model("enc-dec", layers=2, dims=(5, 5, 5))
        names = {k.rsplit(".", 1)[0] for k in model.params}
        assert {"enc.0", "enc.1", "dec.0", "dec.1"} <= names

    def test_bi_three_layers(self):
        model = tiny_model("bi", layers=3, dims=(2, 2, 4), window=3)
        assert model.params["fwd.0.W"].shape == (16, 3 * 2 + 2)
        assert model.params["bwd.0.W"].shape == (16, 3 * 2)
        for k in (1, 2):
            assert model.params[f"fwd.{k}.W"].shape == (16, 8)
            assert model.params[f"bwd.{k}.W"].shape == (16, 4)
        assert model.params["top.W"].shape == (16, 8)
        assert "fwd.3.W" not in model.params

    def test_alignment_steps(self):
        for arch in ("uni", "bi"):
            logp, _ = forward_teacher_forced(tiny_model(arch), aligned("CAT", "K AE T"))
            assert logp.shape == (5, len(PHONES))

    def test_enc_dec_steps(self):
        logp, _ = forward_teacher_forced(tiny_model("enc-dec"), (tuple("CAT"), ("K", "AE", "T")))
        assert logp.shape == (4, len(PHONES))

    def test_unknown_symbol(self):
        with pytest.raises(VocabularyError):
            forward_teacher_forced(tiny_model("uni"), aligned("CAZ", "K AE T"))

    @pytest.mark.parametrize(
        "kwargs", [dict(architecture="rnn"), dict(hidden_dim=0), dict(window=0), dict(layers=0), dict(init_scale=-1)]
    )
    def test_bad_config(self, kwargs):
        base = dict(architecture="bi", letter_dim=2, phoneme_dim=2, hidden_dim=2)
        base.update(kwargs)
        with pytest.raises(ConfigError):
            build_model(ModelConfig(**base), LETTERS, PHONES)

    def test_tables_swapped(self):
        with pytest.raises(ConfigError):
            build_model(ModelConfig("uni", 2, 2, 2), PHONES, LETTERS)


class TestInitialisation:
    @pytest.mark.parametrize("arch", ["enc-dec", "uni", "bi"])
    def test_zero_init_is_uniform(self, arch):
        phones = SymbolTable.from_observed("phoneme", ["K", "AE", "T", "G", "B"])
        assert len(phones) == 8
        model = build_model(ModelConfig(arch, 3, 3, 4, layers=2, init_scale=0.0), LETTERS, phones)
        examples = ENC_DEC if arch == "enc-dec" else [a for a in ALIGNED if "AH:L" not in a.slot_symbols]
        for ex in examples:
            logp, ce = forward_teacher_forced(model, ex)
            np.testing.assert_allclose(logp, -math.log(8), rtol=0, atol=1e-12)
            assert ce == pytest.approx(len(logp) * math.log(8), abs=1e-9)

    def test_seeded(self):
        a, b, c = tiny_model("bi", seed=3), tiny_model("bi", seed=3), tiny_model("bi", seed=4)
        for name in a.params:
            assert np.array_equal(a.params[name], b.params[name])
        assert not np.array_equal(a.params["fwd.0.W"], c.params["fwd.0.W"])

    def test_biases_zero(self):
        model = tiny_model("bi", layers=2)
        assert all(not v.any() for k, v in model.params.items() if k.endswith(".b"))


class TestBackwardIndependence:
    def test_backward_stack_ignores_phoneme_embeddings(self):
        model = tiny_model("bi", layers=2)
        ids = model.encode_letters("CAT")
        before = model.start(ids)["bwd"]
        model.params["emb.phoneme"] = np.random.default_rng(1).normal(size=model.params["emb.phoneme"].shape)
        after = model.start(ids)["bwd"]
        for layer_a, layer_b in zip(before, after):
            for ha, hb in zip(layer_a, layer_b):
                np.testing.assert_array_equal(ha, hb)

    @pytest.mark.parametrize("layers", [1, 2])
    def test_phoneme_embedding_gradient_only_via_forward_input(self, layers):
        # cut the one route from emb.phoneme (the bottom forward input); any
        # remaining gradient would have to come through the backward stack
        model = tiny_model("bi", layers=layers)
        dL = model.config.window * model.config.letter_dim
        model.params["fwd.0.W"][:, dL:] = 0
        batch = [model.encode_example(a) for a in ALIGNED[:3]]
        _, grads = model.loss_and_grads(batch)
        assert not grads["emb.phoneme"].any()
        assert all(grads[f"bwd.{k}.W"].any() for k in range(layers))

    def test_perturbing_previous_phonemes_keeps_backward_activities(self):
        model = tiny_model("bi", layers=2)
        ex_a = model.encode_example(aligned("CAT", "K AE T"))
        ex_b = model.encode_example(aligned("CAT", "T ∅ K"))
        windows_a, prev_a, _ = model._framing(ex_a[0][None], ex_a[1][None])
        windows_b, prev_b, _ = model._framing(ex_b[0][None], ex_b[1][None])
        assert not np.array_equal(prev_a, prev_b)
        _, (_, bwd_a, _) = model._forward(windows_a, prev_a)
        _, (_, bwd_b, _) = model._forward(windows_b, prev_b)
        for layer_a, layer_b in zip(bwd_a, bwd_b):
            for ca, cb in zip(layer_a, layer_b):
                for field in ("x", "h_prev", "c_prev", "o", "tanh_c"):
                    np.testing.assert_array_equal(getattr(ca, field), getattr(cb, field))


class TestTraining:
    @pytest.mark.parametrize("arch", ["enc-dec", "uni", "bi"])
    def test_sgd_reduces_cross_entropy(self, arch):
        model = tiny_model(arch, dims=(4, 4, 8), init_scale=0.1)
        ex = model.encode_example(examples_for(model)[0])
        start = mean_cross_entropy(model, [ex])
        for _ in range(100):
            _, grads = model.loss_and_grads([ex])
            sgd_apply(model.params, grads, 0.01)
        assert mean_cross_entropy(model, [ex]) < start

    def test_batched_gradient_is_sum(self):
        model = tiny_model("bi")
        batch = [model.encode_example(a) for a in ALIGNED[:3]]
        loss, grads = model.loss_and_grads(batch)
        parts = [model.loss_and_grads([b]) for b in batch]
        assert loss == pytest.approx(sum(p[0] for p in parts), abs=1e-12)
        for k in grads:
            np.testing.assert_allclose(grads[k], sum(p[1][k] for p in parts), atol=1e-12)

    def test_teacher_forced_matches_loss(self):
        for arch in ("enc-dec", "uni", "bi"):
            model = tiny_model(arch)
            ex = examples_for(model)[0]
            _, ce = forward_teacher_forced(model, ex)
            loss, _ = model.loss_and_grads([model.encode_example(ex)], need_grads=False)
            assert ce == pytest.approx(float(loss), abs=1e-10)
