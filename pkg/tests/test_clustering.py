import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expertbank import clustering, numerics


def brute_force_best_inertia(z, r):
    """Global optimum by enumerating every assignment (tiny n only)."""
    n = z.shape[0]
    best = np.inf
    for combo in itertools.product(range(r), repeat=n):
        ids = np.array(combo)
        cost = 0.0
        for c in range(r):
            members = z[ids == c]
            if len(members):
                cost += float(np.sum((members - members.mean(axis=0)) ** 2))
        best = min(best, cost)
    return best


def test_two_separated_blobs_recovered_exactly():
    rng = numerics.make_rng(0)
    a = -10.0 + 0.1 * rng.standard_normal((40, 2))
    b = 10.0 + 0.1 * rng.standard_normal((40, 2))
    z = np.vstack([a, b])
    model, ids = clustering.kmeans_fit(z, 2, seed=1)
    assert len(set(ids[:40])) == 1 and len(set(ids[40:])) == 1
    assert ids[0] != ids[40]
    lo, hi = sorted(model.centers[:, 0])
    assert abs(lo + 10.0) < 0.1 and abs(hi - 10.0) < 0.1


def test_single_cluster_center_is_mean():
    z = numerics.make_rng(1).standard_normal((17, 3))
    model, ids = clustering.kmeans_fit(z, 1, seed=0)
    assert np.array_equal(model.centers[0], z.mean(axis=0))
    assert np.all(ids == 0)


def test_three_points_two_clusters_matches_brute_force():
    z = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
    model, _ = clustering.kmeans_fit(z, 2, seed=0)
    assert np.isclose(model.inertia, brute_force_best_inertia(z, 2))
    assert np.isclose(model.inertia, 0.5)  # {0,1} pooled at 0.5, {10} alone


def test_assign_center_point_and_tie_break():
    model = clustering.KMeansModel(np.array([[0.0, 0.0], [2.0, 0.0]]), 0.0, 1)
    ids = clustering.assign(model, np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.0]]))
    assert list(ids) == [0, 1, 0]  # equidistant midpoint goes to cluster 0


def test_assign_matches_linear_scan():
    rng = numerics.make_rng(2)
    centers = rng.standard_normal((5, 3))
    z = rng.standard_normal((50, 3))
    model = clustering.KMeansModel(centers, 0.0, 1)
    ids = clustering.assign(model, z)
    for i in range(50):
        dists = [np.sum((z[i] - c) ** 2) for c in centers]
        assert ids[i] == int(np.argmin(dists))


def test_cluster_loss_resummation_oracle():
    rng = numerics.make_rng(3)
    z = rng.standard_normal((30, 2))
    model, ids = clustering.kmeans_fit(z, 3, seed=4)
    expected = sum(
        float(np.sum((z[i] - model.centers[ids[i]]) ** 2)) for i in range(30)
    )
    assert np.isclose(clustering.cluster_loss(model, z), expected, rtol=1e-12)
    assert np.isclose(clustering.cluster_loss(model, z), model.inertia, rtol=1e-12)


def test_cluster_loss_empty_input_is_zero():
    model = clustering.KMeansModel(np.zeros((2, 2)), 0.0, 1)
    assert clustering.cluster_loss(model, np.zeros((0, 2))) == 0.0


def test_inertia_trace_non_increasing():
    rng = numerics.make_rng(5)
    z = rng.standard_normal((60, 2))
    model, _ = clustering.kmeans_fit(z, 4, seed=6)
    trace = np.array(model.inertia_trace)
    assert np.all(np.diff(trace) <= 1e-9)
    assert model.inertia == trace[-1]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), r=st.integers(1, 4))
def test_property_trace_monotone_and_assign_stable(seed, r):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((rng.integers(max(r, 5), 40), rng.integers(1, 4)))
    model, ids = clustering.kmeans_fit(z, r, seed=seed, n_init=2)
    trace = np.array(model.inertia_trace)
    assert np.all(np.diff(trace) <= 1e-9 * max(1.0, trace[0]))
    # converged fixpoint: re-assigning changes nothing, and the centers are
    # already the means of their members
    again = clustering.assign(model, z)
    assert np.array_equal(ids, again)
    for c in range(r):
        members = z[again == c]
        if len(members):
            assert np.allclose(model.centers[c], members.mean(axis=0), atol=1e-9)


def test_restarts_never_hurt():
    rng = numerics.make_rng(7)
    z = np.vstack([rng.standard_normal((20, 2)) + off for off in (0, 5, 10, 15)])
    one, _ = clustering.kmeans_fit(z, 4, seed=8, n_init=1)
    many, _ = clustering.kmeans_fit(z, 4, seed=8, n_init=10)
    assert many.inertia <= one.inertia + 1e-12


def test_deterministic_under_seed():
    z = numerics.make_rng(9).standard_normal((50, 3))
    m1, i1 = clustering.kmeans_fit(z, 3, seed=10)
    m2, i2 = clustering.kmeans_fit(z, 3, seed=10)
    assert np.array_equal(m1.centers, m2.centers)
    assert np.array_equal(i1, i2)


def test_errors():
    with pytest.raises(ValueError):
        clustering.kmeans_fit(np.zeros((2, 2)), 3)
    with pytest.raises(ValueError):
        clustering.kmeans_fit(np.zeros((4, 2)), 0)
    with pytest.raises(ValueError):
        clustering.kmeans_fit(np.array([[np.nan, 0.0]]), 1)


def test_label_map_pure_clusters():
    rng = numerics.make_rng(11)
    z = np.vstack([rng.standard_normal((30, 2)), rng.standard_normal((30, 2)) + 20])
    y = np.array([7] * 30 + [3] * 30)
    model, _ = clustering.kmeans_fit(z, 2, seed=12)
    lmap = clustering.fit_label_map(model, z, y)
    got = clustering.apply_label_map(lmap, clustering.assign(model, z))
    assert np.array_equal(got, y)


def test_label_map_majority_vote():
    # cluster 0 gets 60% label 1 / 40% label 2; vote must pick 1
    z = np.vstack([np.zeros((10, 1)), np.full((20, 1), 30.0)])
    y = np.array([1] * 6 + [2] * 4 + [5] * 20)
    model = clustering.KMeansModel(np.array([[0.0], [30.0]]), 0.0, 1)
    lmap = clustering.fit_label_map(model, z, y)
    assert lmap.labels[0] == 1 and lmap.labels[1] == 5


def test_label_map_unseen_cluster_falls_back_to_global_majority():
    z = np.zeros((5, 1))
    y = np.array([4, 4, 4, 2, 2])
    model = clustering.KMeansModel(np.array([[0.0], [99.0]]), 0.0, 1)
    lmap = clustering.fit_label_map(model, z, y)
    assert lmap.labels[1] == 4


def test_label_map_rejects_bad_labels():
    model = clustering.KMeansModel(np.zeros((1, 1)), 0.0, 1)
    with pytest.raises(ValueError):
        clustering.fit_label_map(model, np.zeros((2, 1)), np.array([-1, 0]))
    with pytest.raises(ValueError):
        clustering.fit_label_map(model, np.zeros((2, 1)), np.array([0]))
