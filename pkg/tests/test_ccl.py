"""Coupled statistics, subspace solving, scoring, persistence."""

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from reid_sgm.ccl import (
    CclModel,
    PairedSample,
    accumulate_stats,
    load_models,
    project,
    save_models,
    score,
    score_matrix,
    solve_subspace,
)
from reid_sgm.errors import (
    CorruptFile,
    DimensionMismatch,
    NotPositiveDefinite,
    RankTooLarge,
    TooFewPairs,
    UnsupportedFormat,
)


def make_pairs(rng, n=30, d=6, spread=0.3):
    xs = rng.normal(size=(n, d))
    ys = xs + spread * rng.normal(size=(n, d))
    return [PairedSample(x=xs[i], y=ys[i], person_id=str(i)) for i in range(n)]


def random_spd(rng, d, scale=1.0):
    a = rng.normal(size=(d, d))
    return scale * (a @ a.T + 0.05 * d * np.eye(d))


def stats_from_matrices(sigma_m, sigma_e):
    """CoupledStats shell around explicitly chosen covariances."""
    from reid_sgm.ccl import CoupledStats

    d = sigma_m.shape[0]
    return CoupledStats(
        dim=d,
        mean_x=np.zeros(d),
        mean_y=np.zeros(d),
        sigma_m=sigma_m,
        sigma_e=sigma_e,
        pair_count=2 * d,
    )


def hand_model(inv_m, inv_e, inv_avg):
    r = inv_m.shape[0]
    return CclModel(
        w=np.eye(r),
        eigenvalues=np.ones(r),
        inv_sigma_m=inv_m,
        inv_sigma_e=inv_e,
        inv_sigma=inv_avg,
        mean_x=np.zeros(r),
        mean_y=np.zeros(r),
    )


class TestAccumulateStats:
    def test_identical_views_leave_only_ridge_on_difference(self, rng):
        xs = rng.normal(size=(25, 4))
        pairs = [PairedSample(x=xs[i], y=xs[i].copy(), person_id=str(i)) for i in range(25)]
        stats = accumulate_stats(pairs, ridge=1e-3)
        xc = xs - xs.mean(axis=0)
        cov_x = (xc.T @ xc) / len(xs)
        scale = np.trace(4.0 * cov_x) / (2.0 * 4)
        expected_e = 1e-3 * scale * np.eye(4)
        assert np.allclose(stats.sigma_e, expected_e, atol=1e-12)
        assert np.allclose(stats.sigma_m, 4.0 * cov_x + expected_e, atol=1e-12)

    def test_two_pairs_match_hand_computation(self):
        pairs = [
            PairedSample(x=np.array([1.0, 0.0]), y=np.array([0.0, 1.0]), person_id="p"),
            PairedSample(x=np.array([3.0, 2.0]), y=np.array([2.0, 3.0]), person_id="q"),
        ]
        stats = accumulate_stats(pairs, ridge=0.0)
        # centered xs: (-1,-1),(1,1); centered ys: (-1,-1),(1,1)
        # m: (-2,-2),(2,2); e: (0,0),(0,0)
        assert np.allclose(stats.mean_x, [2.0, 1.0])
        assert np.allclose(stats.mean_y, [1.0, 2.0])
        assert np.allclose(stats.sigma_m, [[4.0, 4.0], [4.0, 4.0]])
        assert np.allclose(stats.sigma_e, 0.0)

    def test_naive_covariance_oracle(self, rng):
        pairs = make_pairs(rng, n=12, d=3)
        stats = accumulate_stats(pairs, ridge=0.0)
        mean_x = sum(p.x for p in pairs) / len(pairs)
        mean_y = sum(p.y for p in pairs) / len(pairs)
        sm = np.zeros((3, 3))
        se = np.zeros((3, 3))
        for p in pairs:
            m = (p.x - mean_x) + (p.y - mean_y)
            e = (p.x - mean_x) - (p.y - mean_y)
            sm += np.outer(m, m)
            se += np.outer(e, e)
        assert np.allclose(stats.sigma_m, sm / len(pairs), atol=1e-12)
        assert np.allclose(stats.sigma_e, se / len(pairs), atol=1e-12)

    def test_symmetric_outputs(self, rng):
        stats = accumulate_stats(make_pairs(rng, n=40, d=8))
        assert np.abs(stats.sigma_m - stats.sigma_m.T).max() <= 1e-12
        assert np.abs(stats.sigma_e - stats.sigma_e.T).max() <= 1e-12

    def test_pair_order_independence(self, rng):
        pairs = make_pairs(rng, n=50, d=5)
        a = accumulate_stats(pairs)
        b = accumulate_stats(pairs[::-1])
        assert np.abs(a.sigma_m - b.sigma_m).max() <= 1e-12
        assert np.abs(a.sigma_e - b.sigma_e).max() <= 1e-12

    def test_too_few_pairs(self):
        with pytest.raises(TooFewPairs):
            accumulate_stats([PairedSample(x=np.zeros(2), y=np.zeros(2))])

    def test_dimension_mismatch(self, rng):
        pairs = [
            PairedSample(x=np.zeros(3), y=np.zeros(3), person_id="a"),
            PairedSample(x=np.zeros(4), y=np.zeros(4), person_id="b"),
        ]
        with pytest.raises(DimensionMismatch):
            accumulate_stats(pairs)


class TestSolveSubspace:
    def test_isotropic_degenerate_case(self):
        stats = stats_from_matrices(np.eye(5), np.eye(5))
        model = solve_subspace(stats, 3)
        assert np.allclose(model.eigenvalues, 1.0)
        for i in range(3):
            w = model.w[:, i]
            resid = np.linalg.norm(stats.sigma_m @ w - model.eigenvalues[i] * (stats.sigma_e @ w))
            assert resid <= 1e-12

    def test_diagonal_case(self):
        stats = stats_from_matrices(np.diag([9.0, 1.0]), np.eye(2))
        model = solve_subspace(stats, 1)
        assert model.eigenvalues[0] == pytest.approx(9.0, rel=1e-12)
        assert np.allclose(np.abs(model.w[:, 0]), [1.0, 0.0])

    def test_matches_generalized_eigensolver(self, rng):
        for d in (4, 8, 16):
            for _ in range(10):
                sigma_m = random_spd(rng, d)
                sigma_e = random_spd(rng, d)
                r = max(1, d // 2)
                model = solve_subspace(stats_from_matrices(sigma_m, sigma_e), r)
                ref_vals, ref_vecs = scipy.linalg.eigh(sigma_m, sigma_e)
                ref_vals = ref_vals[::-1][:r]
                ref_vecs = ref_vecs[:, ::-1][:, :r]
                assert np.allclose(model.eigenvalues, ref_vals, rtol=1e-8)
                for i in range(r):
                    a = model.w[:, i] / np.linalg.norm(model.w[:, i])
                    b = ref_vecs[:, i] / np.linalg.norm(ref_vecs[:, i])
                    angle = np.arccos(np.clip(abs(a @ b), -1.0, 1.0))
                    assert angle <= 1e-6

    def test_residual_and_rayleigh_ordering(self, rng):
        stats = accumulate_stats(make_pairs(rng, n=60, d=10))
        model = solve_subspace(stats, 6)
        prev = np.inf
        for i in range(6):
            w = model.w[:, i]
            lam = model.eigenvalues[i]
            resid = np.linalg.norm(stats.sigma_m @ w - lam * (stats.sigma_e @ w))
            resid /= np.linalg.norm(stats.sigma_m @ w)
            assert resid <= 1e-8
            rayleigh = (w @ stats.sigma_m @ w) / (w @ stats.sigma_e @ w)
            assert rayleigh == pytest.approx(lam, rel=1e-8)
            assert rayleigh <= prev * (1 + 1e-12)
            prev = rayleigh

    def test_columns_unit_norm_and_sign_fixed(self, rng):
        stats = accumulate_stats(make_pairs(rng, n=40, d=7))
        model = solve_subspace(stats, 4)
        norms = np.linalg.norm(model.w, axis=0)
        assert np.allclose(norms, 1.0, rtol=1e-12)
        for i in range(4):
            lead = np.argmax(np.abs(model.w[:, i]))
            assert model.w[lead, i] > 0

    def test_rank_too_large(self, rng):
        stats = accumulate_stats(make_pairs(rng, n=20, d=4))
        with pytest.raises(RankTooLarge):
            solve_subspace(stats, 5)
        with pytest.raises(RankTooLarge):
            solve_subspace(stats, 0)

    def test_singular_difference_rejected(self):
        stats = stats_from_matrices(np.eye(3), np.zeros((3, 3)))
        with pytest.raises(NotPositiveDefinite):
            solve_subspace(stats, 2)


class TestProject:
    def test_mean_goes_to_zero(self, rng):
        stats = accumulate_stats(make_pairs(rng, n=30, d=5))
        model = solve_subspace(stats, 3)
        assert np.allclose(project(model, model.mean_x, "A"), 0.0)
        assert np.allclose(project(model, model.mean_y, "B"), 0.0)

    def test_norm_preserved_in_span(self):
        w = np.zeros((5, 2))
        w[0, 0] = 1.0
        w[1, 1] = 1.0
        model = CclModel(
            w=w, eigenvalues=np.ones(2),
            inv_sigma_m=np.eye(2), inv_sigma_e=np.eye(2), inv_sigma=np.eye(2),
            mean_x=np.zeros(5), mean_y=np.zeros(5),
        )
        rep = np.array([3.0, 4.0, 0.0, 0.0, 0.0])
        out = project(model, rep, "A")
        assert np.linalg.norm(out) == pytest.approx(5.0)

    def test_triple_loop_oracle(self, rng):
        stats = accumulate_stats(make_pairs(rng, n=30, d=6))
        model = solve_subspace(stats, 4)
        rep = rng.normal(size=6)
        out = project(model, rep, "B")
        ref = np.zeros(4)
        for j in range(4):
            for i in range(6):
                ref[j] += (rep[i] - model.mean_y[i]) * model.w[i, j]
        assert np.allclose(out, ref, atol=1e-12)

    def test_batch_shape(self, rng):
        stats = accumulate_stats(make_pairs(rng, n=30, d=6))
        model = solve_subspace(stats, 4)
        batch = project(model, rng.normal(size=(9, 6)), "A")
        assert batch.shape == (9, 4)

    def test_dimension_mismatch(self, rng):
        stats = accumulate_stats(make_pairs(rng, n=30, d=6))
        model = solve_subspace(stats, 4)
        with pytest.raises(DimensionMismatch):
            project(model, np.zeros(5), "A")

    def test_bad_view(self, rng):
        stats = accumulate_stats(make_pairs(rng, n=30, d=6))
        model = solve_subspace(stats, 2)
        with pytest.raises(ValueError):
            project(model, np.zeros(6), "C")


class TestScore:
    def test_hand_instance(self):
        model = hand_model(
            inv_m=np.diag([0.5, 0.5]),
            inv_e=np.eye(2),
            inv_avg=np.diag([1 / 1.5, 1 / 1.5]),
        )
        px = np.array([1.0, 0.0])
        value = score(model, px, px)
        assert value == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_equal_arguments_drop_difference_term(self, rng):
        r = 4
        inv_m = random_spd(rng, r)
        inv_e = random_spd(rng, r)
        inv_avg = random_spd(rng, r)
        model = hand_model(inv_m, inv_e, inv_avg)
        px = rng.normal(size=r)
        m = 2.0 * px
        expected = m @ (inv_avg - inv_m) @ m
        assert score(model, px, px) == pytest.approx(expected, rel=1e-12)

    def test_symmetry_is_bitwise(self, rng):
        model = hand_model(random_spd(rng, 5), random_spd(rng, 5), random_spd(rng, 5))
        for _ in range(50):
            a, b = rng.normal(size=5), rng.normal(size=5)
            assert score(model, a, b) == score(model, b, a)

    def test_dimension_check(self, rng):
        model = hand_model(np.eye(3), np.eye(3), np.eye(3))
        with pytest.raises(DimensionMismatch):
            score(model, np.zeros(2), np.zeros(3))


class TestScoreMatrix:
    def test_single_entry_equals_score(self, rng):
        model = hand_model(random_spd(rng, 4), random_spd(rng, 4), random_spd(rng, 4))
        a, b = rng.normal(size=4), rng.normal(size=4)
        out = score_matrix(model, [b], [a])
        assert out.shape == (1, 1)
        assert out[0, 0] == score(model, a, b)

    def test_swapped_roles_transpose(self, rng):
        model = hand_model(random_spd(rng, 4), random_spd(rng, 4), random_spd(rng, 4))
        gallery = rng.normal(size=(6, 4))
        probes = rng.normal(size=(5, 4))
        fwd = score_matrix(model, gallery, probes)
        rev = score_matrix(model, probes, gallery)
        assert np.array_equal(fwd, rev.T)

    def test_matches_looped_scores_bitwise(self, rng):
        model = hand_model(random_spd(rng, 3), random_spd(rng, 3), random_spd(rng, 3))
        gallery = rng.normal(size=(10, 3))
        probes = rng.normal(size=(10, 3))
        out = score_matrix(model, gallery, probes)
        for i in range(10):
            for j in range(10):
                assert out[i, j] == score(model, probes[i], gallery[j])

    def test_dimension_mismatch(self, rng):
        model = hand_model(np.eye(3), np.eye(3), np.eye(3))
        with pytest.raises(DimensionMismatch):
            score_matrix(model, rng.normal(size=(2, 4)), rng.normal(size=(2, 3)))


class TestScalingInvariance:
    def test_ranking_stable_under_global_scaling(self, rng):
        n, d, r = 24, 8, 4
        xs = rng.normal(size=(n, d))
        ys = xs + 0.4 * rng.normal(size=(n, d))
        probes_raw = xs + 0.4 * rng.normal(size=(n, d))

        def top_match(scale):
            pairs = [
                PairedSample(x=scale * xs[i], y=scale * ys[i], person_id=str(i))
                for i in range(n)
            ]
            stats = accumulate_stats(pairs)
            model = solve_subspace(stats, r)
            probes = project(model, scale * probes_raw, "A")
            gallery = project(model, scale * ys, "B")
            return score_matrix(model, gallery, probes).argmax(axis=1)

        base = top_match(1.0)
        for c in (0.02, 5.0, 300.0):
            assert np.array_equal(top_match(c), base)


class TestModelPersistence:
    def make_models(self, rng):
        stats = accumulate_stats(make_pairs(rng, n=40, d=6))
        main = solve_subspace(stats, 4)
        other = solve_subspace(stats, 2)
        return {"SGM": main, "CH": other}

    def test_roundtrip_bitwise(self, tmp_path, rng):
        models = self.make_models(rng)
        path = tmp_path / "m.cclm"
        save_models(path, models)
        loaded = load_models(path)
        assert list(loaded) == ["SGM", "CH"]
        for kind, model in models.items():
            got = loaded[kind]
            for attr in ("w", "eigenvalues", "inv_sigma_m", "inv_sigma_e",
                         "inv_sigma", "mean_x", "mean_y"):
                assert np.array_equal(getattr(model, attr), getattr(got, attr)), attr

    def test_scores_survive_roundtrip_bitwise(self, tmp_path, rng):
        models = self.make_models(rng)
        path = tmp_path / "m.cclm"
        save_models(path, models)
        loaded = load_models(path)["SGM"]
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert score(models["SGM"], a, b) == score(loaded, a, b)

    def test_bad_magic(self, tmp_path, rng):
        path = tmp_path / "m.cclm"
        save_models(path, self.make_models(rng))
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(UnsupportedFormat):
            load_models(path)

    def test_truncation(self, tmp_path, rng):
        path = tmp_path / "m.cclm"
        save_models(path, self.make_models(rng))
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 16])
        with pytest.raises(CorruptFile):
            load_models(path)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_score_symmetry_property(seed):
    rng = np.random.default_rng(seed)
    model = hand_model(random_spd(rng, 3), random_spd(rng, 3), random_spd(rng, 3))
    a, b = rng.normal(size=3), rng.normal(size=3)
    assert score(model, a, b) == score(model, b, a)
