import numpy as np
import pytest
import scipy.linalg

from protoalign.cem import (
    AlignmentConfig,
    ProjectionPair,
    fit,
    load_pair,
    project_text,
    project_visual,
    save_pair,
)
from protoalign.errors import DataError, NumericalError, RankError
from protoalign.linalg import inv_sqrt_psd, svd


def cca_correlations_oracle(x, y, d, center):
    """Canonical correlations via the generalized eigenproblem on scatter blocks.

    rho**2 are the eigenvalues of Cxx^-1 Cxy Cyy^-1 Cyx; solved directly with
    scipy, independently of the whitening + SVD chain under test.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if center:
        x = x - x.mean(axis=0)
        y = y - y.mean(axis=0)
    cxx = x.T @ x
    cyy = y.T @ y
    cxy = x.T @ y
    m = scipy.linalg.solve(cxx, cxy, assume_a="sym") @ scipy.linalg.solve(
        cyy, cxy.T, assume_a="sym"
    )
    rho = np.sqrt(np.clip(scipy.linalg.eigvals(m).real, 0.0, None))
    return np.sort(rho)[::-1][:d]


def cosine(u, v):
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


def random_pair_inputs(seed, rows, m_t, m_v):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((rows, m_t)), rng.standard_normal((rows, m_v))


class TestFit:
    def test_self_alignment_unit_correlations(self):
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal((6, 6))
        pair = fit(x0, x0, AlignmentConfig(d=6, method="cca"))
        assert np.allclose(pair.correlations, 1.0, atol=1e-8)
        assert np.allclose(x0 @ pair.a, x0 @ pair.b, atol=1e-8)

    def test_correlations_match_generalized_eigenproblem_oracle(self):
        x0, y0 = random_pair_inputs(1, 20, 6, 4)
        pair = fit(x0, y0, AlignmentConfig(d=3, method="cca", center=True))
        expected = cca_correlations_oracle(x0, y0, 3, center=True)
        assert np.max(np.abs(pair.correlations - expected)) < 1e-8

    def test_dewhitening_collapses_to_orthogonal_part_when_full_rank(self):
        # for square full-rank inputs the whitening and de-whitening factors
        # cancel, leaving only the first d columns of the orthogonal alignment
        rng = np.random.default_rng(2)
        x0 = rng.standard_normal((7, 7)) + 3 * np.eye(7)
        y0 = rng.standard_normal((7, 7)) + 3 * np.eye(7)
        d = 4
        pair = fit(x0, y0, AlignmentConfig(d=d, method="cca+d"))
        a1 = inv_sqrt_psd(x0.T @ x0)
        b1 = inv_sqrt_psd(y0.T @ y0)
        a2, _, b2t = svd((x0 @ a1).T @ (y0 @ b1))
        assert np.max(np.abs(pair.a - a2[:, :d])) < 1e-8
        assert np.max(np.abs(pair.b - b2t.T[:, :d])) < 1e-8

    def test_whitening_gram_is_identity_for_full_rank(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x0 = rng.standard_normal((30, 8))
            a1 = inv_sqrt_psd(x0.T @ x0)
            gram = (x0 @ a1).T @ (x0 @ a1)
            assert np.max(np.abs(gram - np.eye(8))) < 1e-8

    def test_alignment_factors_orthogonal(self):
        x0, y0 = random_pair_inputs(3, 25, 6, 5)
        a1 = inv_sqrt_psd(x0.T @ x0)
        b1 = inv_sqrt_psd(y0.T @ y0)
        a2, _, b2t = svd((x0 @ a1).T @ (y0 @ b1))
        assert np.max(np.abs(a2.T @ a2 - np.eye(6))) <= 1e-10
        assert np.max(np.abs(b2t @ b2t.T - np.eye(5))) <= 1e-10

    def test_correlations_non_increasing(self):
        x0, y0 = random_pair_inputs(4, 40, 10, 7)
        pair = fit(x0, y0, AlignmentConfig(d=7, method="cca"))
        assert np.all(np.diff(pair.correlations) <= 0)

    @pytest.mark.parametrize("method", ["cca", "cca+d"])
    def test_scale_invariance_of_cosine(self, method):
        x0, y0 = random_pair_inputs(5, 30, 9, 6)
        config = AlignmentConfig(d=4, method=method)
        pair = fit(x0, y0, config)
        scaled = fit(3.0 * x0, y0, config)
        rng = np.random.default_rng(99)
        for _ in range(20):
            q = rng.standard_normal(6)
            n = rng.standard_normal(9)
            base = cosine(project_visual(pair, q), project_text(pair, n))
            other = cosine(project_visual(scaled, q), project_text(scaled, 3.0 * n))
            assert abs(base - other) < 1e-8

    def test_fit_deterministic(self):
        x0, y0 = random_pair_inputs(6, 15, 5, 4)
        p1 = fit(x0.copy(), y0.copy(), AlignmentConfig(d=3, method="cca+d"))
        p2 = fit(x0.copy(), y0.copy(), AlignmentConfig(d=3, method="cca+d"))
        assert p1.a.tobytes() == p2.a.tobytes()
        assert p1.b.tobytes() == p2.b.tobytes()

    def test_rank_error_reports_rank(self):
        # 5 rows bound the cross-product rank at 5 regardless of width
        x0, y0 = random_pair_inputs(7, 5, 10, 8)
        with pytest.raises(RankError) as exc:
            fit(x0, y0, AlignmentConfig(d=6, method="cca"))
        assert exc.value.rank == 5

    def test_d_above_dims_rejected(self):
        x0, y0 = random_pair_inputs(8, 20, 4, 3)
        with pytest.raises(RankError):
            fit(x0, y0, AlignmentConfig(d=4, method="cca"))

    def test_degenerate_modality_rejected(self):
        y0 = np.random.default_rng(9).standard_normal((4, 3))
        with pytest.raises(NumericalError):
            fit(np.zeros((4, 5)), y0, AlignmentConfig(d=2))
        # constant rows become all-zero once centered
        with pytest.raises(NumericalError):
            fit(np.ones((4, 5)), y0, AlignmentConfig(d=2, center=True))

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(DataError):
            fit(np.ones((3, 2)), np.ones((4, 2)), AlignmentConfig(d=1))


class TestProjection:
    def test_zero_vector_uncentered(self):
        x0, y0 = random_pair_inputs(10, 12, 5, 4)
        pair = fit(x0, y0, AlignmentConfig(d=2))
        assert np.array_equal(project_text(pair, np.zeros(5)), np.zeros(2))
        assert np.array_equal(project_visual(pair, np.zeros(4)), np.zeros(2))

    def test_centered_projection_subtracts_fit_mean(self):
        x0, y0 = random_pair_inputs(11, 12, 5, 4)
        pair = fit(x0, y0, AlignmentConfig(d=2, center=True))
        assert np.allclose(project_text(pair, pair.text_mean), np.zeros(2), atol=1e-12)

    def test_paired_rows_reach_leading_correlation(self):
        # square full-rank: every correlation is 1 and the projected rows of
        # the two modalities coincide, so their cosine meets the prediction
        rng = np.random.default_rng(12)
        x0 = rng.standard_normal((6, 6)) + 2 * np.eye(6)
        y0 = rng.standard_normal((6, 6)) + 2 * np.eye(6)
        pair = fit(x0, y0, AlignmentConfig(d=6, method="cca"))
        for i in range(6):
            got = cosine(project_text(pair, x0[i]), project_visual(pair, y0[i]))
            assert got >= pair.correlations[0] - 1e-9

    def test_full_d_projection_is_bijective(self):
        rng = np.random.default_rng(13)
        x0 = rng.standard_normal((8, 8)) + 2 * np.eye(8)
        pair = fit(x0, x0, AlignmentConfig(d=8, method="cca"))
        assert np.linalg.matrix_rank(pair.a) == 8

    def test_dim_mismatch_rejected(self):
        x0, y0 = random_pair_inputs(14, 10, 5, 4)
        pair = fit(x0, y0, AlignmentConfig(d=2))
        with pytest.raises(DataError):
            project_text(pair, np.zeros(4))
        with pytest.raises(DataError):
            project_visual(pair, np.zeros(5))

    def test_batch_projection_matches_rowwise(self):
        x0, y0 = random_pair_inputs(15, 10, 5, 4)
        pair = fit(x0, y0, AlignmentConfig(d=3))
        batch = project_text(pair, x0)
        for i in range(10):
            assert np.array_equal(batch[i], project_text(pair, x0[i]))


class TestPersistence:
    def test_round_trip(self, tmp_path):
        x0, y0 = random_pair_inputs(16, 18, 6, 5)
        pair = fit(x0, y0, AlignmentConfig(d=3, method="cca+d", center=True))
        save_pair(pair, tmp_path / "proj")
        loaded = load_pair(tmp_path / "proj")
        assert loaded.config == pair.config
        assert np.array_equal(loaded.correlations, pair.correlations)
        # matrices are narrowed to float32 on disk
        assert np.allclose(loaded.a, pair.a, atol=1e-6)
        assert np.allclose(loaded.b, pair.b, atol=1e-6)
        assert np.array_equal(loaded.text_mean, pair.text_mean)

    def test_save_deterministic(self, tmp_path):
        x0, y0 = random_pair_inputs(17, 18, 6, 5)
        pair = fit(x0, y0, AlignmentConfig(d=3))
        save_pair(pair, tmp_path / "p1")
        save_pair(pair, tmp_path / "p2")
        for name in ("A.cmm", "B.cmm", "meta.json"):
            assert (tmp_path / "p1" / name).read_bytes() == (tmp_path / "p2" / name).read_bytes()

    def test_meta_keys(self, tmp_path):
        import json

        x0, y0 = random_pair_inputs(18, 18, 6, 5)
        pair = fit(x0, y0, AlignmentConfig(d=2, center=True))
        save_pair(pair, tmp_path / "proj")
        meta = json.loads((tmp_path / "proj" / "meta.json").read_text())
        for key in ("method", "d", "eps_rel", "center", "m_t", "m_v", "correlations"):
            assert key in meta
        assert "text_mean" in meta and "visual_mean" in meta


class TestConfig:
    def test_bad_method(self):
        with pytest.raises(DataError):
            AlignmentConfig(d=2, method="pls")

    def test_bad_d(self):
        with pytest.raises(DataError):
            AlignmentConfig(d=0)

    def test_bad_eps(self):
        with pytest.raises(DataError):
            AlignmentConfig(d=1, eps_rel=-1.0)
