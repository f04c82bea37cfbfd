import numpy as np
import pytest

from expertbank import clustering, expert, numerics, signature, vae


def blob_task(seed, dim=6, lo=0.2, hi=0.8, n=80, spread=0.04):
    """Two tight blobs inside [0, 1]^dim plus their blob ids."""
    rng = numerics.make_rng(seed)
    a = np.clip(lo + spread * rng.standard_normal((n, dim)), 0, 1)
    b = np.clip(hi + spread * rng.standard_normal((n, dim)), 0, 1)
    x = np.vstack([a, b])
    y = np.array([0] * n + [1] * n)
    perm = rng.permutation(2 * n)
    return x[perm], y[perm]


def small_config(dim=6, latent=2, epochs=120):
    # low-dimensional toys need a small beta: with few pixels the KL term
    # otherwise swamps reconstruction and the decoder collapses
    return expert.ExpertConfig(
        vae=vae.VaeConfig(input_dim=dim, latent_dim=latent, hidden=(16, 8),
                          beta=0.1, lr=2e-2, epochs=epochs, batch_size=16),
        clusters=2,
        kmeans_inits=4,
    )


def trained_blob_expert(task_id=1, seed=0, prev=None, cfg=None):
    x, y = blob_task(seed)
    cfg = cfg or small_config()
    rng = numerics.spawn_rng(99, task_id)
    ex = expert.new_expert(prev, cfg, rng, task_id=task_id)
    expert.train_expert(ex, x, cfg, rng)
    return ex, x, y


def test_new_expert_cold_start_deterministic():
    cfg = small_config()
    a = expert.new_expert(None, cfg, numerics.make_rng(5))
    b = expert.new_expert(None, cfg, numerics.make_rng(5))
    assert a.task_id == 1 and not a.finalized
    for (_, pa), (_, pb) in zip(a.params.arrays(), b.params.arrays()):
        assert np.array_equal(pa, pb)


def test_new_expert_warm_start_bit_equal():
    ex, _, _ = trained_blob_expert()
    nxt = expert.new_expert(ex, small_config(), numerics.make_rng(6))
    assert nxt.task_id == 2
    for (_, pa), (_, pb) in zip(nxt.params.arrays(), ex.params.arrays()):
        assert np.array_equal(pa, pb)
    assert nxt.params.enc_w[0] is not ex.params.enc_w[0]  # independent copy


def test_new_expert_warm_start_dimension_mismatch():
    ex, _, _ = trained_blob_expert()
    with pytest.raises(ValueError):
        expert.new_expert(ex, small_config(dim=7), numerics.make_rng(0))


def test_train_expert_produces_signatures_and_freezes():
    ex, x, _ = trained_blob_expert()
    assert ex.finalized
    assert len(ex.signatures) == 2
    assert len(ex.loss_trace) == small_config().vae.epochs
    for sig in ex.signatures:
        assert np.all(sig.eigvals > 0)
        assert np.all(np.isfinite(sig.mean))
        assert sig.task_id == 1
    assert ex.kmeans.centers.shape == (2, 2)


def test_train_expert_rejects_finalized():
    ex, x, _ = trained_blob_expert()
    with pytest.raises(expert.FrozenExpertError):
        expert.train_expert(ex, x, small_config(), numerics.make_rng(0))


def test_train_expert_rejects_empty_data():
    cfg = small_config()
    ex = expert.new_expert(None, cfg, numerics.make_rng(0))
    with pytest.raises(ValueError):
        expert.train_expert(ex, np.zeros((0, 6)), cfg, numerics.make_rng(0))


def test_train_expert_deterministic():
    a, _, _ = trained_blob_expert(seed=3)
    b, _, _ = trained_blob_expert(seed=3)
    for (_, pa), (_, pb) in zip(a.params.arrays(), b.params.arrays()):
        assert np.array_equal(pa, pb)
    assert np.array_equal(a.kmeans.centers, b.kmeans.centers)
    for sa, sb in zip(a.signatures, b.signatures):
        assert np.array_equal(sa.eigvals, sb.eigvals)
        assert np.array_equal(sa.eigvecs, sb.eigvecs)


def test_expert_predict_blob_ids():
    ex, x, y = trained_blob_expert()
    z = vae.encode_batch(ex.params, x)[0]
    lmap = clustering.fit_label_map(ex.kmeans, z, y)
    got = expert.predict_labels(ex, x, lmap)
    assert np.mean(got == y) >= 0.95


def test_expert_predict_empty_and_untrained():
    ex, _, _ = trained_blob_expert()
    assert expert.expert_predict(ex, np.zeros((0, 6))).shape == (0,)
    fresh = expert.new_expert(None, small_config(), numerics.make_rng(0))
    with pytest.raises(ValueError):
        expert.expert_predict(fresh, np.zeros((1, 6)))
    with pytest.raises(ValueError):
        expert.predict_labels(ex, np.zeros((1, 6)), None)


def test_pooled_signature_mode():
    x, _ = blob_task(0)
    cfg = small_config()
    cfg.per_cluster_signatures = False
    rng = numerics.make_rng(1)
    ex = expert.new_expert(None, cfg, rng)
    expert.train_expert(ex, x, cfg, rng)
    assert len(ex.signatures) == 1
    z = vae.encode_batch(ex.params, x)[0]
    assert np.allclose(ex.signatures[0].mean, z.mean(axis=0))


def test_pooled_fallback_for_singleton_cluster():
    z = np.vstack([numerics.make_rng(2).standard_normal((30, 3)), [[50.0, 0, 0]]])
    center = np.array([50.0, 0.0, 0.0])
    sig = expert._pooled_with_center(z, 4, 1, center, 1e-8)
    pooled = signature.extract_signature(z, 4, 1)
    assert np.array_equal(sig.mean, center)
    assert np.array_equal(sig.eigvals, pooled.eigvals)


def test_floor_signature_for_single_point_task():
    sig = expert._pooled_with_center(np.ones((1, 3)), 1, 0, np.ones(3), 1e-8)
    assert np.all(sig.eigvals == 1e-8)
    assert np.array_equal(sig.eigvecs, np.eye(3))


def test_store_contiguity_and_freeze_rules():
    store = expert.ExpertStore()
    ex1, _, _ = trained_blob_expert(task_id=1)
    store.add(ex1)
    assert store.task_ids == [1] and store.get(1) is ex1
    fresh = expert.new_expert(None, small_config(), numerics.make_rng(0), task_id=2)
    with pytest.raises(ValueError):
        store.add(fresh)  # not finalized
    ex3, _, _ = trained_blob_expert(task_id=3)
    with pytest.raises(ValueError):
        store.add(ex3)  # skips task 2
    with pytest.raises(KeyError):
        store.get(2)


def test_training_new_task_leaves_old_expert_untouched():
    ex1, x1, _ = trained_blob_expert(task_id=1, seed=0)
    before = [a.copy() for _, a in ex1.params.arrays()]
    probe = expert.expert_predict(ex1, x1)
    ex2, _, _ = trained_blob_expert(task_id=2, seed=1, prev=ex1)
    after = [a for _, a in ex1.params.arrays()]
    for a, b in zip(before, after):
        assert np.array_equal(a, b)
    assert np.array_equal(probe, expert.expert_predict(ex1, x1))
    assert ex2.task_id == 2


def test_warm_start_reaches_target_loss_sooner():
    # task B is task A's blobs nudged by 0.05; starting from A's weights
    # must hit the cold run's final loss in fewer epochs
    xa, _ = blob_task(7)
    xb, _ = blob_task(8, lo=0.25, hi=0.75)
    cfg = small_config(epochs=60)
    rng = numerics.make_rng(9)
    exa = expert.new_expert(None, cfg, rng)
    expert.train_expert(exa, xa, cfg, rng)

    cold = expert.new_expert(None, cfg, numerics.make_rng(10))
    expert.train_expert(cold, xb, cfg, numerics.make_rng(11))
    target = cold.loss_trace[-1]

    warm = expert.new_expert(exa, cfg, numerics.make_rng(10))
    expert.train_expert(warm, xb, cfg, numerics.make_rng(11))

    def epochs_to(trace, target):
        for i, v in enumerate(trace):
            if v <= target:
                return i
        return len(trace)

    assert epochs_to(warm.loss_trace, target) < epochs_to(cold.loss_trace, target)


# --- generation round trip (signature.generate needs a trained expert) -----

class _OneTaskStore:
    def __init__(self, ex):
        self._ex = ex

    def get(self, task_id):
        assert task_id == self._ex.task_id
        return self._ex


def test_generate_round_trip():
    ex, x, _ = trained_blob_expert()
    store = _OneTaskStore(ex)
    gen = signature.generate(store, 1, 101, numerics.make_rng(12))
    assert gen.data.shape == (101, 6)
    assert gen.latents.shape == (101, 2)
    assert np.all((gen.data >= 0) & (gen.data <= 1))
    assert np.all(gen.labels == 1)
    # counts follow split_counts order, so source clusters are known
    source = np.concatenate([
        np.full(c, s.cluster_id)
        for s, c in zip(ex.signatures, signature.split_counts(101, 2))
    ])
    re_assigned = expert.expert_predict(ex, gen.data)
    assert np.mean(re_assigned == source) >= 0.80


def test_generate_deterministic():
    ex, _, _ = trained_blob_expert()
    store = _OneTaskStore(ex)
    a = signature.generate(store, 1, 50, numerics.make_rng(13))
    b = signature.generate(store, 1, 50, numerics.make_rng(13))
    assert np.array_equal(a.data, b.data)
    assert np.array_equal(a.latents, b.latents)


def test_generate_rejects_bad_count():
    ex, _, _ = trained_blob_expert()
    with pytest.raises(ValueError):
        signature.generate(_OneTaskStore(ex), 1, 0, numerics.make_rng(0))
