import math

import numpy as np
import pytest

from protoalign.cem import AlignmentConfig, fit
from protoalign.errors import DataError, NumericalError
from protoalign.mapnet import forward, init_mapnet
from protoalign.prototypes import PrototypeSet
from protoalign.scoring import classify, cosine, score_s1, score_s2, score_s3, softmax_ce


def protos_of(rows):
    rows = np.asarray(rows, dtype=np.float64)
    return PrototypeSet(classes=tuple(f"c{i}" for i in range(rows.shape[0])), matrix=rows)


class TestS1:
    def test_exact_match_scores_zero(self):
        protos = protos_of([[1.0, 2.0], [5.0, 5.0]])
        scores = score_s1(np.array([1.0, 2.0]), protos)
        assert scores[0] == 0.0
        assert np.all(scores <= 0)

    def test_arithmetic(self):
        protos = protos_of([[1.0, 0.0], [0.0, 2.0]])
        scores = score_s1(np.zeros(2), protos)
        assert np.array_equal(scores, [-1.0, -4.0])

    def test_translation_invariance(self):
        rng = np.random.default_rng(0)
        protos = rng.standard_normal((4, 3))
        q = rng.standard_normal(3)
        t = rng.standard_normal(3)
        base = score_s1(q, protos_of(protos))
        moved = score_s1(q + t, protos_of(protos + t))
        assert np.allclose(base, moved, atol=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(DataError):
            score_s1(np.zeros(3), protos_of([[1.0, 2.0]]))


class TestS2:
    def test_lambda_zero_is_bitwise_s1(self):
        rng = np.random.default_rng(1)
        protos = protos_of(rng.standard_normal((3, 4)))
        names = rng.standard_normal((3, 6))
        net = init_mapnet(6, 4, hidden=8, seed=0)
        net.mode = "eval"
        q = rng.standard_normal(4)
        s2 = score_s2(q, protos, names, net, 0.0)
        s1 = score_s1(q, protos)
        assert s2.tobytes() == s1.tobytes()

    def test_perfect_mapping_adds_lambda(self):
        # a zero net maps to b2; set b2 = q so cos = 1 and the text term is +lam
        q = np.array([1.0, 2.0, 2.0])
        net = init_mapnet(2, 3, hidden=4, seed=0)
        net.w1[:] = 0.0
        net.w2[:] = 0.0
        net.b2 = q.copy()
        net.mode = "eval"
        protos = protos_of([q, q])
        names = np.array([[1.0, 0.0], [0.0, 1.0]])
        scores = score_s2(q, protos, names, net, 2.5)
        assert np.allclose(scores, [2.5, 2.5], atol=1e-12)

    def test_equal_prototypes_tie_broken_by_text(self):
        rng = np.random.default_rng(2)
        proto = rng.standard_normal(3)
        protos = protos_of([proto, proto])
        net = init_mapnet(2, 3, hidden=16, seed=3)
        net.mode = "eval"
        names = np.array([[1.0, 0.0], [0.0, 1.0]])
        q = rng.standard_normal(3)
        scores = score_s2(q, protos, names, net, 4.0)
        text_terms = np.array([cosine(q, v) for v in forward(net, names)])
        assert classify(scores) == int(np.argmax(text_terms))


class TestS3:
    @pytest.fixture
    def fitted(self):
        rng = np.random.default_rng(4)
        x0 = rng.standard_normal((20, 6))
        y0 = rng.standard_normal((20, 4))
        return fit(x0, y0, AlignmentConfig(d=3, method="cca+d")), rng

    def test_lambda_zero_is_bitwise_s1(self, fitted):
        pair, rng = fitted
        protos = protos_of(rng.standard_normal((5, 4)))
        names = rng.standard_normal((5, 6))
        q = rng.standard_normal(4)
        assert score_s3(q, protos, names, pair, 0.0).tobytes() == score_s1(q, protos).tobytes()

    def test_name_scaling_invariance(self, fitted):
        pair, rng = fitted
        protos = protos_of(rng.standard_normal((5, 4)))
        names = rng.standard_normal((5, 6))
        q = rng.standard_normal(4)
        base = score_s3(q, protos, names, pair, 5.0)
        scaled = score_s3(q, protos, 3.0 * names, pair, 5.0)
        assert np.max(np.abs(base - scaled)) < 1e-8

    def test_papers_selected_config_is_valid(self, fitted):
        # lambda=5 with a 50-dim cca+d pair is an accepted configuration
        rng = np.random.default_rng(5)
        x0 = rng.standard_normal((80, 64))
        y0 = rng.standard_normal((80, 60))
        pair = fit(x0, y0, AlignmentConfig(d=50, method="cca+d"))
        protos = protos_of(rng.standard_normal((5, 60)))
        names = rng.standard_normal((5, 64))
        scores = score_s3(rng.standard_normal(60), protos, names, pair, 5.0)
        assert scores.shape == (5,) and np.all(np.isfinite(scores))

    def test_monotone_in_lambda_when_distances_tied(self, fitted):
        pair, rng = fitted
        proto = rng.standard_normal(4)
        protos = protos_of([proto, proto])
        names = rng.standard_normal((2, 6))
        q = rng.standard_normal(4)
        gaps = []
        for lam in (1.0, 2.0, 4.0):
            s = score_s3(q, protos, names, pair, lam)
            gaps.append(abs(s[0] - s[1]))
        assert gaps[0] < gaps[1] < gaps[2]


class TestCosine:
    def test_zero_vector_gives_zero(self):
        assert cosine(np.zeros(3), np.ones(3)) == 0.0
        assert cosine(np.ones(3), np.zeros(3)) == 0.0

    def test_unit_alignment(self):
        v = np.array([1.0, 1.0])
        assert cosine(v, 2 * v) == pytest.approx(1.0)


class TestSoftmaxCe:
    def test_uniform_loss_is_log_n(self):
        probs, loss = softmax_ce(np.zeros(5), 2)
        assert np.allclose(probs, 0.2, atol=1e-15)
        assert loss == pytest.approx(math.log(5), abs=1e-12)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(6)
        probs, _ = softmax_ce(rng.standard_normal(8) * 10, 0)
        assert abs(probs.sum() - 1.0) <= 1e-12
        assert np.all(probs >= 0)

    def test_shift_invariance(self):
        scores = np.array([1.0, 3.0, -2.0])
        p1, _ = softmax_ce(scores, 1)
        p2, _ = softmax_ce(scores + 123.0, 1)
        assert np.allclose(p1, p2, atol=1e-15)

    def test_saturated_loss_near_zero(self):
        scores = np.zeros(5)
        scores[0] = 100.0
        _, loss = softmax_ce(scores, 0)
        assert 0.0 <= loss < 1e-40

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            softmax_ce(np.zeros(3), 3)

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericalError):
            softmax_ce(np.array([np.inf, 0.0]), 0)


class TestClassify:
    def test_argmax(self):
        assert classify(np.array([-1.0, -4.0])) == 0

    def test_tie_breaks_low_index(self):
        assert classify(np.array([2.0, 2.0])) == 0

    def test_permutation_tracks_argmax(self):
        rng = np.random.default_rng(7)
        scores = rng.standard_normal(6)
        perm = rng.permutation(6)
        assert classify(scores[perm]) == int(np.where(perm == classify(scores))[0][0])

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            classify(np.array([]))
