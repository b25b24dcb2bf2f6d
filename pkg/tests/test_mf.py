import numpy as np
import pytest

from copyattack import mf


def test_score_basics():
    assert mf.score(np.array([1.0, 2.0]), np.array([0.0, 0.0])) == 0.0
    assert mf.score(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0
    assert mf.score(np.array([3.0, 4.0]), np.array([1.0, 2.0])) == 11.0
    with pytest.raises(ValueError):
        mf.score(np.array([1.0]), np.array([1.0, 2.0]))


def test_train_mf_separable_toy():
    pairs = [("u1", "i1"), ("u2", "i2")] * 5
    table = mf.train_mf(pairs, mf.MFConfig(dim=4, epochs=200, learning_rate=0.05,
                                           rng_seed=3))
    s11 = mf.score(table.user_vectors["u1"], table.item_vectors["i1"])
    s12 = mf.score(table.user_vectors["u1"], table.item_vectors["i2"])
    s22 = mf.score(table.user_vectors["u2"], table.item_vectors["i2"])
    s21 = mf.score(table.user_vectors["u2"], table.item_vectors["i1"])
    assert s11 > s12
    assert s22 > s21


def test_train_mf_empty():
    with pytest.raises(ValueError):
        mf.train_mf([], mf.MFConfig())


def test_train_mf_deterministic_bitwise():
    pairs = [(f"u{i % 5}", f"i{i % 7}") for i in range(40)]
    cfg = mf.MFConfig(dim=4, epochs=10, rng_seed=11)
    t1 = mf.train_mf(pairs, cfg)
    t2 = mf.train_mf(pairs, cfg)
    for u in t1.user_vectors:
        assert np.array_equal(t1.user_vectors[u], t2.user_vectors[u])
    for i in t1.item_vectors:
        assert np.array_equal(t1.item_vectors[i], t2.item_vectors[i])


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    P = rng.normal(0, 0.3, size=(3, 4))
    Q = rng.normal(0, 0.3, size=(3, 4))
    samples = [(0, 0, 1), (0, 1, 0), (1, 1, 1), (2, 2, 1), (2, 0, 0)]
    l2 = 1e-3
    _, dP, dQ = mf.mf_loss_and_grads(P, Q, samples, l2)
    eps = 1e-6
    for M, dM in ((P, dP), (Q, dQ)):
        for idx in np.ndindex(M.shape):
            orig = M[idx]
            M[idx] = orig + eps
            lp, _, _ = mf.mf_loss_and_grads(P, Q, samples, l2)
            M[idx] = orig - eps
            lm, _, _ = mf.mf_loss_and_grads(P, Q, samples, l2)
            M[idx] = orig
            fd = (lp - lm) / (2 * eps)
            denom = max(abs(fd), abs(dM[idx]), 1e-8)
            assert abs(fd - dM[idx]) / denom <= 1e-4


def test_training_loss_decreases():
    rng = np.random.default_rng(5)
    # block structure: users 0-9 like items 0-9, users 10-19 like items 10-19
    pairs = []
    for u in range(20):
        base = 0 if u < 10 else 10
        for _ in range(8):
            pairs.append((f"u{u}", f"i{base + rng.integers(10)}"))
    table = mf.train_mf(pairs, mf.MFConfig(dim=8, epochs=30, learning_rate=0.05,
                                           rng_seed=1))
    losses = table.epoch_losses
    assert np.mean(losses[-3:]) < np.mean(losses[:3])


def test_norms_finite_long_training():
    pairs = [(f"u{i % 6}", f"i{i % 9}") for i in range(50)]
    table = mf.train_mf(pairs, mf.MFConfig(dim=4, epochs=500, rng_seed=2))
    for v in list(table.user_vectors.values()) + list(table.item_vectors.values()):
        assert np.all(np.isfinite(v))


def test_holdout_auc_perfect_and_random():
    table = mf.EmbeddingTable(2)
    table.user_vectors = {"u": np.array([1.0, 0.0])}
    table.item_vectors = {"hi": np.array([5.0, 0.0]), "lo": np.array([-5.0, 0.0])}
    assert mf.holdout_auc(table, [("u", "hi")], [("u", "lo")]) == 1.0

    # random embeddings: AUC approx 0.5, Monte-Carlo over >= 1e4 pairs
    rng = np.random.default_rng(7)
    table = mf.EmbeddingTable(4)
    for k in range(40):
        table.user_vectors[f"u{k}"] = rng.normal(size=4)
    for k in range(40):
        table.item_vectors[f"i{k}"] = rng.normal(size=4)
    pos = [(f"u{rng.integers(40)}", f"i{rng.integers(40)}") for _ in range(100)]
    neg = [(f"u{rng.integers(40)}", f"i{rng.integers(40)}") for _ in range(100)]
    auc = mf.holdout_auc(table, pos, neg)
    assert abs(auc - 0.5) < 0.05


def test_holdout_auc_block_structure():
    rng = np.random.default_rng(9)
    pairs = []
    for u in range(20):
        base = 0 if u < 10 else 10
        for _ in range(8):
            pairs.append((f"u{u}", f"i{base + rng.integers(10)}"))
    train = pairs[::2]
    held = pairs[1::2]
    table = mf.train_mf(train, mf.MFConfig(dim=8, epochs=60, learning_rate=0.05,
                                           rng_seed=4))
    held = [p for p in held
            if p[0] in table.user_vectors and p[1] in table.item_vectors]
    neg = []
    for u in range(20):
        base = 10 if u < 10 else 0  # cross-block pairs as negatives
        for _ in range(4):
            cand = (f"u{u}", f"i{base + rng.integers(10)}")
            if cand[0] in table.user_vectors and cand[1] in table.item_vectors:
                neg.append(cand)
    auc = mf.holdout_auc(table, held, neg)
    assert auc > 0.8


def test_embedding_round_trip(tmp_path):
    pairs = [(f"u{i % 3}", f"i{i % 4}") for i in range(12)]
    table = mf.train_mf(pairs, mf.MFConfig(dim=4, epochs=5, rng_seed=0))
    path = str(tmp_path / "emb.txt")
    mf.save_embeddings(table, path)
    loaded = mf.load_embeddings(path)
    assert loaded.dim == table.dim
    for u, v in table.user_vectors.items():
        assert np.array_equal(loaded.user_vectors[u], v)
    for i, v in table.item_vectors.items():
        assert np.array_equal(loaded.item_vectors[i], v)
