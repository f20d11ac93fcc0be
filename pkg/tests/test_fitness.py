import numpy as np
import pytest

from gpdr.distances import pairwise_euclidean
from gpdr.fitness import (
    HYPERBOLIC,
    WORST_FITNESS,
    FitnessError,
    FitnessSpec,
    RankTargetCache,
    WeightScheme,
    gp_autoencoder_fitness,
    kendall_tau_row,
    prepare_batch,
    rank_fitness,
    rank_fitness_many,
    sammon_stress,
    score,
    teacher_fitness,
    weighted_kendall_tau_row,
)
from gpdr.gp_core import (
    AutoencoderMultiTree,
    MultiTree,
    Tree,
    constant,
    op,
    variable,
)


def _tau_oracle(d, dt):
    """Exhaustive O(N^2) tau-a."""
    n = len(d)
    s = 0.0
    for j in range(n):
        for l in range(j + 1, n):
            s += np.sign(d[j] - d[l]) * np.sign(dt[j] - dt[l])
    return s / (n * (n - 1) / 2)


def _weighted_tau_oracle(d, dt):
    """Exhaustive weighted tau with hyperbolic rank weights."""
    n = len(d)
    ranks = np.empty(n)
    ranks[np.argsort(d, kind="stable")] = np.arange(n)
    w = 1.0 / (ranks + 1.0)
    num = den = 0.0
    for j in range(n):
        for l in range(j + 1, n):
            pw = w[j] + w[l]
            num += pw * np.sign(d[j] - d[l]) * np.sign(dt[j] - dt[l])
            den += pw
    return num / den


def test_kendall_tau_known_values():
    assert kendall_tau_row([1, 2, 3, 4], [1, 2, 3, 4]) == 1.0
    assert kendall_tau_row([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    # one swapped adjacent pair out of six: (6-2)/6
    assert np.isclose(kendall_tau_row([1, 2, 3, 4], [2, 1, 3, 4]), 4 / 6)
    # a tie contributes zero concordance but stays in the denominator
    assert np.isclose(kendall_tau_row([1, 1, 2], [1, 2, 3]), 2 / 3)


def test_weighted_tau_limits():
    d = [0.5, 1.5, 2.5, 3.5]
    assert np.isclose(weighted_kendall_tau_row(d, d), 1.0)
    assert np.isclose(weighted_kendall_tau_row(d, d[::-1]), -1.0)


def test_tau_matches_exhaustive_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(3, 30))
        d = rng.normal(size=n)
        dt = rng.normal(size=n)
        assert np.isclose(kendall_tau_row(d, dt), _tau_oracle(d, dt),
                          atol=1e-12)
        assert np.isclose(weighted_kendall_tau_row(d, dt),
                          _weighted_tau_oracle(d, dt), atol=1e-12)


def test_weight_schemes():
    r = np.array([0.0, 1.0, 3.0])
    assert np.allclose(HYPERBOLIC.weight(r), [1.0, 0.5, 0.25])
    assert np.allclose(WeightScheme("uniform").weight(r), 1.0)
    with pytest.raises(FitnessError):
        WeightScheme("nope").weight(r)


def test_sammon_closed_forms():
    rng = np.random.default_rng(1)
    D = pairwise_euclidean(rng.normal(size=(8, 3)))
    assert sammon_stress(D, D) == 0.0
    # single pair with d=2, d_tilde=1: ((2-1)^2/2)/2 = 0.25
    two = np.array([[0.0, 2.0], [2.0, 0.0]])
    one = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert sammon_stress(two, one) == 0.25


def test_sammon_matches_double_loop_oracle():
    rng = np.random.default_rng(2)
    for _ in range(30):
        D = pairwise_euclidean(rng.normal(size=(6, 2)))
        Dt = pairwise_euclidean(rng.normal(size=(6, 2)))
        num = den = 0.0
        for i in range(6):
            for j in range(i + 1, 6):
                num += (D[i, j] - Dt[i, j]) ** 2 / D[i, j]
                den += D[i, j]
        assert np.isclose(sammon_stress(D, Dt), num / den, atol=1e-12)


def test_sammon_skips_duplicate_rows():
    X = np.array([[0.0], [0.0], [1.0]])
    D = pairwise_euclidean(X)
    assert np.isfinite(sammon_stress(D, D))
    with pytest.raises(FitnessError):
        sammon_stress(np.zeros((3, 3)), np.zeros((3, 3)))


def test_rank_fitness_equals_mean_row_tau():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(12, 4))
    L = rng.normal(size=(12, 2))
    D, Dt = pairwise_euclidean(X), pairwise_euclidean(L)
    mask = ~np.eye(12, dtype=bool)
    rows_d = D[mask].reshape(12, 11)
    rows_t = Dt[mask].reshape(12, 11)
    expected = -np.mean([
        weighted_kendall_tau_row(rows_d[i], rows_t[i]) for i in range(12)
    ])
    assert np.isclose(rank_fitness(D, Dt), expected, atol=1e-12)
    expected_u = -np.mean([
        kendall_tau_row(rows_d[i], rows_t[i]) for i in range(12)
    ])
    assert np.isclose(rank_fitness(D, Dt, scheme=None), expected_u, atol=1e-12)


def test_rank_fitness_many_matches_single_path():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n = int(rng.integers(4, 20))
        D = pairwise_euclidean(rng.normal(size=(n, 3)))
        lats = [rng.normal(size=(n, 2)) for _ in range(3)]
        for scheme in (HYPERBOLIC, WeightScheme("uniform"), None):
            singles = [
                rank_fitness(D, pairwise_euclidean(L), scheme) for L in lats
            ]
            many = rank_fitness_many(D, lats, scheme)
            assert np.allclose(singles, many, atol=1e-12)


def test_rank_fitness_many_handles_ties_on_both_sides():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n = int(rng.integers(6, 16))
        # integer coordinates force ties in both target and latent distances
        X = rng.integers(0, 3, size=(n, 2)).astype(float)
        D = pairwise_euclidean(X)
        lats = [rng.integers(0, 3, size=(n, 2)).astype(float)
                for _ in range(3)]
        for scheme in (HYPERBOLIC, None):
            singles = [
                rank_fitness(D, pairwise_euclidean(L), scheme) for L in lats
            ]
            many = rank_fitness_many(D, lats, scheme)
            assert np.allclose(singles, many, atol=1e-12)


def test_rank_cache_matches_direct_computation():
    rng = np.random.default_rng(5)
    D = pairwise_euclidean(rng.normal(size=(9, 3)))
    Dt = pairwise_euclidean(rng.normal(size=(9, 2)))
    cache = RankTargetCache(D, HYPERBOLIC)
    assert np.isclose(-cache.mean_tau(Dt), rank_fitness(D, Dt), atol=1e-12)


def test_pointwise_objectives():
    L = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert teacher_fitness(L, L) == 0.0
    assert teacher_fitness(L, L + 1.0) == 1.0
    assert gp_autoencoder_fitness(L, L + 2.0) == 4.0
    with pytest.raises(FitnessError):
        teacher_fitness(L, L[:1])


def test_fitness_spec_validation():
    X = np.zeros((4, 2))
    with pytest.raises(FitnessError):
        FitnessSpec(objective="nope", inputs=X, target=X)
    with pytest.raises(FitnessError):
        FitnessSpec(objective="dist", inputs=X, target=X)  # missing metric
    with pytest.raises(FitnessError):
        FitnessSpec(objective="teacher", inputs=X, target=X, metric="euclidean")
    with pytest.raises(FitnessError):
        FitnessSpec(objective="teacher", inputs=X, target=X)


def _identity_genome(p, k):
    return MultiTree(tuple(Tree(variable(j), p) for j in range(k)))


def test_score_dist_objective_perfect_genome():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(20, 2))
    spec = FitnessSpec(objective="dist", inputs=X, target=X, metric="euclidean")
    ctx = prepare_batch(spec, np.arange(20))
    # identity mapping preserves every distance exactly
    assert score(_identity_genome(2, 2), spec, ctx) == 0.0


def test_score_rank_objective_and_batch_slicing():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(30, 3))
    spec = FitnessSpec(objective="rank", inputs=X, target=X, metric="euclidean")
    batch = np.arange(0, 30, 2)
    ctx = prepare_batch(spec, batch)
    got = score(_identity_genome(3, 3), spec, ctx)
    D = pairwise_euclidean(X[batch])
    assert np.isclose(got, rank_fitness(D, D), atol=1e-12)
    assert np.isclose(got, -1.0, atol=1e-12)


def test_score_rank_blocked_fallback_matches_cache(monkeypatch):
    import gpdr.fitness as fit

    rng = np.random.default_rng(8)
    X = rng.normal(size=(25, 3))
    spec = FitnessSpec(objective="rank", inputs=X, target=X, metric="euclidean")
    g = _identity_genome(3, 2)
    with_cache = score(g, spec, prepare_batch(spec, np.arange(25)))
    monkeypatch.setattr(fit, "RANK_CACHE_MAX_ELEMENTS", 10)
    ctx = prepare_batch(spec, np.arange(25))
    assert ctx.rank_cache is None
    assert np.isclose(score(g, spec, ctx), with_cache, atol=1e-12)


def test_score_teacher_and_autoencoder_objectives():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(15, 2))
    spec = FitnessSpec(objective="teacher", inputs=X, target=X,
                       teacher_latent=X[:, :1])
    ctx = prepare_batch(spec, np.arange(15))
    assert score(_identity_genome(2, 1), spec, ctx) == 0.0

    amt = AutoencoderMultiTree(
        _identity_genome(2, 2), _identity_genome(2, 2)
    )
    spec = FitnessSpec(objective="gp_autoencoder", inputs=X, target=X)
    ctx = prepare_batch(spec, np.arange(15))
    assert score(amt, spec, ctx) == 0.0
    with pytest.raises(FitnessError):
        score(_identity_genome(2, 2), spec, ctx)


def test_score_geodesic_metric_uses_geodesic_target():
    n = 40
    ang = 2 * np.pi * np.arange(n) / n
    X = np.column_stack([np.cos(ang), np.sin(ang)])
    spec_g = FitnessSpec(objective="dist", inputs=X, target=X,
                         metric="geodesic", n_neighbors=2)
    spec_e = FitnessSpec(objective="dist", inputs=X, target=X,
                         metric="euclidean")
    g = _identity_genome(2, 2)
    ctx_g = prepare_batch(spec_g, np.arange(n))
    ctx_e = prepare_batch(spec_e, np.arange(n))
    # identity genome matches Euclidean distances exactly but not geodesics
    assert score(g, spec_e, ctx_e) == 0.0
    assert score(g, spec_g, ctx_g) > 0.01


def test_score_collapses_nonfinite_to_sentinel():
    X = np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]])
    # constant trees make every latent distance 0 and sammon finite, but a
    # degenerate 1-point latent on teacher stays finite too; force inf via
    # a fitness whose target has zero distances instead
    spec = FitnessSpec(objective="dist", inputs=X, target=X, metric="euclidean")
    ctx = prepare_batch(spec, np.arange(3))
    const_genome = MultiTree((Tree(constant(0.0), 2),))
    assert np.isfinite(score(const_genome, spec, ctx))
    # the sentinel is used when the objective itself is non-finite
    bad = FitnessSpec(objective="teacher", inputs=X, target=X,
                      teacher_latent=np.full((3, 1), np.inf))
    ctx = prepare_batch(bad, np.arange(3))
    assert score(MultiTree((Tree(variable(0), 2),)), bad, ctx) == WORST_FITNESS
