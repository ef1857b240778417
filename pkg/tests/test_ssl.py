import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ssfl_kws.ssl as ssl_mod
from ssfl_kws.augment import AugmentPipeline
from ssfl_kws.errors import DomainError
from ssfl_kws.harness.metrics import pseudo_label_metrics
from ssfl_kws.nncore import ModelSpec, Tensor, backward, build_model, cross_entropy, forward, sgd_step
from ssfl_kws.nncore.autograd import soft_cross_entropy
from ssfl_kws.ssl import (
    Batch,
    PseudoBatch,
    mix_supervised_loss,
    pseudo_from_probs,
    pseudo_label,
    supervised_loss,
    unsupervised_loss,
)

SPEC = ModelSpec(n_mels=4, n_frames=8, n_classes=3, block_channels=(4,), kernel_size=3)
SPEC_NOBN = ModelSpec(n_mels=4, n_frames=8, n_classes=3, block_channels=(4,), kernel_size=3, use_batchnorm=False)


def features(n, seed=0):
    return np.random.default_rng(seed).standard_normal((n, 4, 8))


def grads(params):
    return np.concatenate([params.grad(n).ravel() for n in params.names()])


def uniform_model(spec):
    p = build_model(spec, 0)
    p["head.weight"].data[...] = 0.0
    return p


class TestSupervised:
    def test_perfect_stub(self, monkeypatch):
        labels = np.array([0, 2, 1])

        def oracle_forward(params, spec, x, train=False):
            logits = np.zeros((len(x), spec.n_classes))
            logits[np.arange(len(x)), labels] = 50.0
            return Tensor(logits)

        monkeypatch.setattr(ssl_mod, "forward", oracle_forward)
        loss = supervised_loss(None, SPEC, Batch(features(3), labels))
        assert loss.item() < 1e-9

    def test_uniform_output(self):
        spec = ModelSpec(n_mels=4, n_frames=8, n_classes=12, block_channels=(4,))
        loss = supervised_loss(uniform_model(spec), spec, Batch(features(5), [0, 3, 6, 9, 11]))
        assert loss.item() == pytest.approx(math.log(12), abs=1e-12)

    def test_overfits_tiny_batch(self):
        p = build_model(SPEC, 0)
        batch = Batch(features(6, seed=1), [0, 1, 2, 0, 1, 2])
        history = []
        for _ in range(50):
            loss = supervised_loss(p, SPEC, batch)
            history.append(loss.item())
            p.zero_grad()
            backward(loss)
            sgd_step(p, 0.05, 0.9)
        assert np.mean(history[-5:]) < np.mean(history[:5])
        assert history[-1] < 0.5 * history[0]

    def test_unlabeled_rejected(self):
        with pytest.raises(DomainError):
            supervised_loss(build_model(SPEC, 0), SPEC, Batch(features(2), [0, -1]))


class TestPseudoLabel:
    def test_tau_zero_keeps_all(self):
        pb = pseudo_label(build_model(SPEC, 0), SPEC, features(7), tau=0.0)
        assert pb.n_kept == 7 and pb.label_ratio == 1.0

    def test_tau_one_keeps_none(self):
        pb = pseudo_label(build_model(SPEC, 0), SPEC, features(7), tau=1.0)
        assert pb.n_kept == 0

    def test_threshold_rule(self):
        pb = pseudo_from_probs(features(2), np.array([[0.96, 0.04], [0.6, 0.4]]), 0.95)
        assert pb.keep_mask.tolist() == [True, False]
        assert pb.pseudo_labels.tolist() == [0, 0]

    def test_stub_model(self, monkeypatch):
        monkeypatch.setattr(ssl_mod, "predict_proba", lambda p, s, x: np.array([[0.96, 0.04], [0.6, 0.4]]))
        pb = pseudo_label(None, SPEC, features(2), tau=0.95)
        assert pb.keep_mask.tolist() == [True, False]
        np.testing.assert_allclose(pb.confidences, [0.96, 0.6])

    def test_eval_mode(self):
        p = build_model(SPEC, 0)
        before = {k: v.copy() for k, v in p.buffers.items()}
        pseudo_label(p, SPEC, features(4), tau=0.5)
        assert all(np.array_equal(before[k], p.buffers[k]) for k in before)

    def test_bad_tau(self):
        with pytest.raises(DomainError):
            pseudo_label(build_model(SPEC, 0), SPEC, features(2), tau=1.01)

    @given(st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_label_ratio_monotone_in_tau(self, seed):
        p = build_model(SPEC, seed)
        x = features(16, seed)
        ratios = [pseudo_label(p, SPEC, x, tau=t).label_ratio for t in (0, 0.2, 0.4, 0.5, 0.7, 0.9, 1.0)]
        assert all(a >= b for a, b in zip(ratios, ratios[1:]))

    @given(st.integers(0, 1000), st.floats(0.0, 1.0))
    @settings(max_examples=25, deadline=None)
    def test_threshold_accuracy_brute_force(self, seed, tau):
        p = build_model(SPEC, seed)
        pb = pseudo_label(p, SPEC, features(20, seed), tau=tau)
        truth = np.random.default_rng(seed).integers(0, 3, 20)
        _, thresh_acc, _ = pseudo_label_metrics(pb, truth)
        hits = kept = 0
        for i in range(20):
            if pb.keep_mask[i]:
                kept += 1
                hits += int(pb.pseudo_labels[i] == truth[i])
        assert thresh_acc == (hits / kept if kept else -1.0)


def make_pseudo(x, labels, keep):
    n = len(labels)
    return PseudoBatch(x, np.asarray(labels), np.asarray(keep, dtype=bool), np.ones(n))


class TestUnsupervised:
    def test_nothing_kept(self):
        p = build_model(SPEC, 0)
        p.zero_grad()
        loss = unsupervised_loss(p, SPEC, make_pseudo(features(3), [0, 1, 2], [False] * 3))
        assert loss.item() == 0.0
        backward(loss)
        assert np.all(grads(p) == 0)

    def test_own_labels_bounded(self):
        p = build_model(SPEC, 0)
        x = features(8)
        pb = pseudo_label(p, SPEC, x, tau=0.0)
        loss = unsupervised_loss(p, SPEC, pb, train=False)
        assert 0 <= loss.item() <= math.log(3)

    def test_duplicate_weighting(self):
        p = build_model(SPEC_NOBN, 0)
        x = features(2)
        ce = [cross_entropy(forward(p, SPEC_NOBN, x[i:i + 1]), [i]).item() for i in range(2)]
        base = unsupervised_loss(p, SPEC_NOBN, make_pseudo(x, [0, 1], [True, True])).item()
        dup = unsupervised_loss(p, SPEC_NOBN, make_pseudo(x[[0, 0, 1]], [0, 0, 1], [True] * 3)).item()
        assert base == pytest.approx((ce[0] + ce[1]) / 2, abs=1e-12)
        assert dup == pytest.approx((2 * ce[0] + ce[1]) / 3, abs=1e-12)

    def test_dropped_examples_have_no_influence(self):
        p = build_model(SPEC, 0)
        x = features(4)
        y = x.copy()
        y[1] += 100.0
        keep = [True, False, True, True]
        out = []
        for inp in (x, y):
            q = build_model(SPEC, 0)
            q.zero_grad()
            backward(unsupervised_loss(q, SPEC, make_pseudo(inp, [0, 1, 2, 0], keep)))
            out.append(grads(q))
        np.testing.assert_array_equal(out[0], out[1])

    def test_non_negative(self):
        pb = make_pseudo(features(4), [0, 1, 2, 0], [True] * 4)
        assert unsupervised_loss(build_model(SPEC, 1), SPEC, pb).item() >= 0


class TestMixSupervised:
    def test_lambda_one_matches_supervised(self):
        batch = Batch(features(4), [0, 1, 2, 1])
        pb = make_pseudo(features(3, seed=5), [2, 2, 0], [True, True, False])
        weak = AugmentPipeline.from_string("basic", 4, 8)
        a = mix_supervised_loss(build_model(SPEC, 0), SPEC, batch, pb, rng=np.random.default_rng(1), weak=weak, lam=1.0)
        b = supervised_loss(build_model(SPEC, 0), SPEC, batch, weak, np.random.default_rng(1))
        assert a.item() == pytest.approx(b.item(), abs=1e-12)

    def test_soft_target_decomposition(self):
        rng = np.random.default_rng(0)
        logits = Tensor(rng.standard_normal((5, 3)))
        y1, y2 = np.array([0, 1, 2, 0, 1]), np.array([2, 2, 1, 0, 0])
        lam = 0.7
        eye = np.eye(3)
        q = lam * eye[y1] + (1 - lam) * eye[y2]
        assert np.allclose(q.sum(axis=1), 1.0)
        soft = soft_cross_entropy(logits, q).item()
        split = lam * cross_entropy(logits, y1).item() + (1 - lam) * cross_entropy(logits, y2).item()
        assert soft == pytest.approx(split, abs=1e-12)

    def test_mixed_loss_equals_decomposition(self):
        p = build_model(SPEC_NOBN, 0)
        xl, xu = features(3), features(2, seed=9)
        batch = Batch(xl, [0, 1, 2])
        pb = make_pseudo(xu, [1, 2], [True, True])
        lam = 0.8
        got = mix_supervised_loss(p, SPEC_NOBN, batch, pb, lam=lam).item()
        pair = np.arange(3) % 2
        logits = forward(p, SPEC_NOBN, lam * xl + (1 - lam) * xu[pair])
        want = lam * cross_entropy(logits, [0, 1, 2]).item() + (1 - lam) * cross_entropy(logits, pb.pseudo_labels[pair]).item()
        assert got == pytest.approx(want, abs=1e-12)

    def test_fallback_without_kept(self):
        batch = Batch(features(4), [0, 1, 2, 1])
        pb = make_pseudo(features(2), [0, 0], [False, False])
        a = mix_supervised_loss(build_model(SPEC, 0), SPEC, batch, pb, rng=np.random.default_rng(0))
        b = supervised_loss(build_model(SPEC, 0), SPEC, batch)
        assert a.item() == b.item()

    @given(st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_finite(self, seed):
        batch = Batch(features(4, seed), [0, 1, 2, 1])
        pb = make_pseudo(features(3, seed + 1), [2, 2, 0], [True, False, True])
        loss = mix_supervised_loss(build_model(SPEC, seed), SPEC, batch, pb, rng=np.random.default_rng(seed))
        assert np.isfinite(loss.item()) and loss.item() >= 0

