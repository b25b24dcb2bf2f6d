"""Matrix-factorization embeddings trained with logistic loss and sampled
negatives; plain SGD so the finite-difference gradient check is exact."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DivergenceError(Exception):
    pass


@dataclass(frozen=True)
class MFConfig:
    dim: int = 8
    learning_rate: float = 0.001
    negatives_per_positive: int = 4
    epochs: int = 30
    l2: float = 1e-4
    rng_seed: int = 0
    init_std: float = 0.1


@dataclass
class EmbeddingTable:
    dim: int
    user_vectors: dict = field(default_factory=dict)  # user_id -> np.ndarray
    item_vectors: dict = field(default_factory=dict)


def score(user_vec, item_vec):
    if len(user_vec) != len(item_vec):
        raise ValueError(f"dimension mismatch: {len(user_vec)} vs {len(item_vec)}")
    return float(np.dot(user_vec, item_vec))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -35.0, 35.0)))


def mf_loss_and_grads(P, Q, samples, l2):
    """Logistic loss over (u, i, y) samples plus L2; returns (loss, dP, dQ).

    Kept in one place so tests can check it against finite differences.
    """
    loss = 0.0
    dP = np.zeros_like(P)
    dQ = np.zeros_like(Q)
    for u, i, y in samples:
        s = _sigmoid(np.dot(P[u], Q[i]))
        loss += -np.log(s + 1e-300) if y else -np.log(1.0 - s + 1e-300)
        g = s - (1.0 if y else 0.0)
        dP[u] += g * Q[i]
        dQ[i] += g * P[u]
    loss += 0.5 * l2 * (np.sum(P * P) + np.sum(Q * Q))
    dP += l2 * P
    dQ += l2 * Q
    return loss, dP, dQ


def train_mf(interactions, config: MFConfig):
    """Train user/item embeddings on implicit positives.

    `interactions` is a list of (user_id, item_id) pairs (or objects with
    user_id/item_id attributes). Deterministic for a fixed seed.
    """
    pairs = [
        (p.user_id, p.item_id) if hasattr(p, "user_id") else (p[0], p[1])
        for p in interactions
    ]
    if not pairs:
        raise ValueError("empty interaction list")
    users = sorted({u for u, _ in pairs})
    items = sorted({i for _, i in pairs})
    u_index = {u: k for k, u in enumerate(users)}
    i_index = {i: k for k, i in enumerate(items)}
    positives = [(u_index[u], i_index[i]) for u, i in pairs]
    pos_set = set(positives)

    rng = np.random.default_rng(config.rng_seed)
    P = rng.normal(0.0, config.init_std, size=(len(users), config.dim))
    Q = rng.normal(0.0, config.init_std, size=(len(items), config.dim))
    lr = config.learning_rate
    n_items = len(items)

    epoch_losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(positives))
        total = 0.0
        for idx in order:
            u, i = positives[idx]
            # positive step
            s = _sigmoid(np.dot(P[u], Q[i]))
            total += -np.log(s + 1e-300)
            g = s - 1.0
            pu = P[u].copy()
            P[u] -= lr * (g * Q[i] + config.l2 * P[u])
            Q[i] -= lr * (g * pu + config.l2 * Q[i])
            # sampled negatives
            for _ in range(config.negatives_per_positive):
                j = int(rng.integers(n_items))
                if (u, j) in pos_set:
                    continue
                s = _sigmoid(np.dot(P[u], Q[j]))
                total += -np.log(1.0 - s + 1e-300)
                pu = P[u].copy()
                P[u] -= lr * (s * Q[j] + config.l2 * P[u])
                Q[j] -= lr * (s * pu + config.l2 * Q[j])
        if not np.isfinite(total):
            raise DivergenceError(f"non-finite training loss at epoch {epoch}")
        epoch_losses.append(total / max(1, len(positives)))

    table = EmbeddingTable(config.dim)
    for u, k in u_index.items():
        table.user_vectors[u] = P[k].copy()
    for i, k in i_index.items():
        table.item_vectors[i] = Q[k].copy()
    table.epoch_losses = epoch_losses
    return table


def holdout_auc(table: EmbeddingTable, held_out_positives, sampled_negatives,
                rng_seed=0):
    """Brute-force pairwise AUC of positive vs negative (user, item) scores."""
    if not held_out_positives or not sampled_negatives:
        raise ValueError("need both held-out positives and negatives")
    pos = [score(table.user_vectors[u], table.item_vectors[i])
           for u, i in held_out_positives]
    neg = [score(table.user_vectors[u], table.item_vectors[i])
           for u, i in sampled_negatives]
    wins = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def save_embeddings(table: EmbeddingTable, path):
    with open(path, "w") as fh:
        fh.write(f"{table.dim} {len(table.user_vectors)} {len(table.item_vectors)}\n")
        for uid in sorted(table.user_vectors):
            vals = " ".join(repr(float(x)) for x in table.user_vectors[uid])
            fh.write(f"u {uid} {vals}\n")
        for iid in sorted(table.item_vectors):
            vals = " ".join(repr(float(x)) for x in table.item_vectors[iid])
            fh.write(f"i {iid} {vals}\n")


def load_embeddings(path):
    with open(path) as fh:
        header = fh.readline().split()
        dim, n_users, n_items = int(header[0]), int(header[1]), int(header[2])
        table = EmbeddingTable(dim)
        for line in fh:
            kind, ident, *vals = line.split()
            vec = np.array([float(v) for v in vals])
            if len(vec) != dim:
                raise ValueError(f"bad vector length for {ident}")
            if kind == "u":
                table.user_vectors[ident] = vec
            else:
                table.item_vectors[ident] = vec
    if len(table.user_vectors) != n_users or len(table.item_vectors) != n_items:
        raise ValueError("embedding file header does not match contents")
    return table
