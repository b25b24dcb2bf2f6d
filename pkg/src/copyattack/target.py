"""Black-box target recommenders: item-kNN co-occurrence and implicit-MF,
behind a query/inject/pretend interface that never exposes parameters."""

from __future__ import annotations

import copy
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .mf import MFConfig, train_mf


class TargetError(Exception):
    pass


@dataclass
class PretendUserSet:
    user_ids: list
    profiles: dict


class TargetModel:
    """Common environment shell: user profiles, item catalog, determinstic
    Top-k queries with ascending-id tie-breaks, profile injection."""

    kind = None

    def __init__(self, seed=0):
        self.seed = seed
        self.items = []            # sorted catalog
        self.item_index = {}
        self.profiles = {}         # user_id -> list of item ids
        self.fitted = False

    # -- fitting -----------------------------------------------------------
    def fit(self, train_interactions):
        pairs = [
            (p.user_id, p.item_id) if hasattr(p, "user_id") else (p[0], p[1])
            for p in train_interactions
        ]
        if not pairs:
            raise TargetError("empty training set")
        per_user = {}
        for u, i in pairs:
            per_user.setdefault(u, [])
            if i not in per_user[u]:
                per_user[u].append(i)
        self.items = sorted({i for _, i in pairs})
        self.item_index = {i: k for k, i in enumerate(self.items)}
        self.profiles = per_user
        self._fit_params(pairs)
        self.fitted = True
        return self

    def _fit_params(self, pairs):
        raise NotImplementedError

    def _scores(self, user_id):
        """Score every catalog item for the user; shape (n_items,)."""
        raise NotImplementedError

    def _absorb(self, user_id, items):
        """Incorporate one new profile into model state."""
        raise NotImplementedError

    def _pre_query_refresh(self):
        pass

    # -- black-box surface ---------------------------------------------------
    def query_topk(self, user_id, k, candidate_mode="all"):
        if user_id not in self.profiles:
            raise TargetError(f"unknown user {user_id!r}")
        if k < 1:
            raise TargetError("k must be >= 1")
        self._pre_query_refresh()
        scores = self._scores(user_id)
        own = {self.item_index[i] for i in self.profiles[user_id] if i in self.item_index}
        if candidate_mode == "all":
            candidates = [j for j in range(len(self.items)) if j not in own]
        else:
            mode, n, seed = candidate_mode
            assert mode == "sampled"
            rng = np.random.default_rng(seed)
            pool = [j for j in range(len(self.items)) if j not in own]
            if n < len(pool):
                picked = rng.choice(len(pool), size=n, replace=False)
                candidates = [pool[j] for j in sorted(picked)]
            else:
                candidates = pool
        # descending score, ties by ascending item id (catalog is sorted)
        order = sorted(candidates, key=lambda j: (-scores[j], self.items[j]))
        if k > len(candidates):
            warnings.warn(f"k={k} exceeds candidate pool of {len(candidates)}; returning full pool")
        return [self.items[j] for j in order[:k]]

    def inject_profiles(self, crafted_profiles):
        """crafted_profiles: dict user_id -> list of item ids."""
        for uid, items in crafted_profiles.items():
            for i in items:
                if i not in self.item_index:
                    raise TargetError(f"profile {uid!r} references unknown item {i!r}")
        for uid, items in crafted_profiles.items():
            dedup = []
            for i in items:
                if i not in dedup:
                    dedup.append(i)
            self.profiles[uid] = dedup
            self._absorb(uid, dedup)
        return self

    def create_pretend_users(self, count, profile_length, rng_seed,
                             excluded_items=()):
        """Register attacker-owned observer accounts with popularity-sampled
        profiles (excluding current target items)."""
        if count <= 0:
            raise TargetError("pretend user count must be positive")
        pop = self.item_popularity()
        excluded = set(excluded_items)
        ids = [i for i in self.items if i not in excluded]
        if profile_length > len(ids):
            raise TargetError("catalog smaller than requested profile length")
        weights = np.array([pop.get(i, 0) + 1.0 for i in ids], dtype=float)
        weights /= weights.sum()
        rng = np.random.default_rng(rng_seed)
        profiles = {}
        for n in range(count):
            uid = f"__pretend_{n}"
            picked = rng.choice(len(ids), size=profile_length, replace=False, p=weights)
            profiles[uid] = [ids[j] for j in picked]
        self.inject_profiles(profiles)
        return PretendUserSet(sorted(profiles), profiles)

    # -- utilities -----------------------------------------------------------
    def item_popularity(self):
        pop = {}
        for items in self.profiles.values():
            for i in items:
                pop[i] = pop.get(i, 0) + 1
        return pop

    def snapshot(self):
        return copy.deepcopy(self)

    def evaluate_offline(self, test_interactions, k_values, negatives=100, rng_seed=0):
        """Rank each held-out item among sampled non-interacted negatives;
        mean HR@K and NDCG@K per K. Unknown users are skipped and counted."""
        from .metrics import hit_ratio, ndcg_single

        self._pre_query_refresh()
        rng = np.random.default_rng(rng_seed)
        hits = {k: [] for k in k_values}
        ndcgs = {k: [] for k in k_values}
        skipped = 0
        for rec in test_interactions:
            u, held = (rec.user_id, rec.item_id) if hasattr(rec, "user_id") else rec[:2]
            if u not in self.profiles or held not in self.item_index:
                skipped += 1
                continue
            scores = self._scores(u)
            own = set(self.profiles[u])
            pool = [j for j in range(len(self.items))
                    if self.items[j] not in own and self.items[j] != held]
            n_neg = min(negatives, len(pool))
            picked = rng.choice(len(pool), size=n_neg, replace=False)
            cand = [pool[j] for j in sorted(picked)] + [self.item_index[held]]
            ranked = sorted(cand, key=lambda j: (-scores[j], self.items[j]))
            ranked_items = [self.items[j] for j in ranked]
            for k in k_values:
                hits[k].append(hit_ratio(ranked_items, held, k))
                ndcgs[k].append(ndcg_single(ranked_items, held, k))
        table = []
        for k in sorted(k_values):
            n = len(hits[k])
            table.append({
                "K": k,
                "HR": float(np.mean(hits[k])) if n else 0.0,
                "NDCG": float(np.mean(ndcgs[k])) if n else 0.0,
                "n_users_evaluated": n,
            })
        return {"rows": table, "skipped": skipped}

    def save(self, path):
        raise NotImplementedError


class ItemKNNTarget(TargetModel):
    """Cosine-normalized item co-occurrence; injections update counts
    incrementally, so the model is exact at all times."""

    kind = "item-knn"

    def _fit_params(self, pairs):
        m = len(self.items)
        self.cooc = np.zeros((m, m))
        self.pop = np.zeros(m)
        for items in self.profiles.values():
            idx = [self.item_index[i] for i in items]
            for a in range(len(idx)):
                self.pop[idx[a]] += 1
                for b in range(a + 1, len(idx)):
                    self.cooc[idx[a], idx[b]] += 1
                    self.cooc[idx[b], idx[a]] += 1

    def _absorb(self, user_id, items):
        idx = [self.item_index[i] for i in items]
        for a in range(len(idx)):
            self.pop[idx[a]] += 1
            for b in range(a + 1, len(idx)):
                self.cooc[idx[a], idx[b]] += 1
                self.cooc[idx[b], idx[a]] += 1

    def similarity(self, item_a, item_b):
        a, b = self.item_index[item_a], self.item_index[item_b]
        denom = np.sqrt(self.pop[a] * self.pop[b])
        return float(self.cooc[a, b] / denom) if denom > 0 else 0.0

    def _scores(self, user_id):
        idx = [self.item_index[i] for i in self.profiles[user_id]
               if i in self.item_index]
        if not idx:
            return np.zeros(len(self.items))
        denom = np.sqrt(np.maximum(self.pop, 1.0))
        sims = self.cooc[idx] / (denom[idx][:, None] * denom[None, :])
        return sims.sum(axis=0)

    def save(self, path):
        blob = {
            "kind": self.kind,
            "seed": self.seed,
            "items": [str(i) for i in self.items],
            "profiles": {str(u): [str(i) for i in it] for u, it in self.profiles.items()},
        }
        with open(path, "w") as fh:
            json.dump(blob, fh)


class ImplicitMFTarget(TargetModel):
    """Implicit-feedback MF; new users are folded in by ridge least squares
    against frozen item factors, item factors refresh lazily before queries."""

    kind = "implicit-mf"

    def __init__(self, seed=0, config: MFConfig = None, fold_l2=0.1):
        super().__init__(seed)
        self.config = config or MFConfig(rng_seed=seed)
        self.fold_l2 = fold_l2
        self._dirty_items = set()

    def _fit_params(self, pairs):
        table = train_mf(pairs, self.config)
        self.user_vecs = {u: v.copy() for u, v in table.user_vectors.items()}
        self.item_mat = np.stack([table.item_vectors[i] for i in self.items])

    def _fold_in(self, items):
        idx = [self.item_index[i] for i in items]
        Q = self.item_mat[idx]
        A = Q.T @ Q + self.fold_l2 * np.eye(Q.shape[1])
        return np.linalg.solve(A, Q.T @ np.ones(len(idx)))

    def _absorb(self, user_id, items):
        self.user_vecs[user_id] = self._fold_in(items)
        self._dirty_items.update(self.item_index[i] for i in items)

    def _pre_query_refresh(self):
        if not self._dirty_items:
            return
        # ridge refresh of touched item factors against all current user vectors
        users_of = {}
        for u, items in self.profiles.items():
            for i in items:
                j = self.item_index.get(i)
                if j in self._dirty_items:
                    users_of.setdefault(j, []).append(u)
        e = self.item_mat.shape[1]
        for j, us in users_of.items():
            P = np.stack([self.user_vecs[u] for u in us])
            A = P.T @ P + self.fold_l2 * np.eye(e)
            self.item_mat[j] = np.linalg.solve(A, P.T @ np.ones(len(us)))
        self._dirty_items.clear()

    def _scores(self, user_id):
        return self.item_mat @ self.user_vecs[user_id]

    def save(self, path):
        blob = {
            "kind": self.kind,
            "seed": self.seed,
            "items": [str(i) for i in self.items],
            "item_mat": self.item_mat.tolist(),
            "user_vecs": {str(u): v.tolist() for u, v in self.user_vecs.items()},
            "profiles": {str(u): [str(i) for i in it] for u, it in self.profiles.items()},
        }
        with open(path, "w") as fh:
            json.dump(blob, fh)


def fit_target(train_interactions, kind, seed=0, mf_config=None):
    if kind == "item-knn":
        model = ItemKNNTarget(seed=seed)
    elif kind == "implicit-mf":
        model = ImplicitMFTarget(seed=seed, config=mf_config or MFConfig(rng_seed=seed))
    else:
        raise TargetError(f"unknown target kind {kind!r}")
    return model.fit(train_interactions)


# functional aliases over the method surface
def query_topk(model, user_id, k, candidate_mode="all"):
    return model.query_topk(user_id, k, candidate_mode)


def inject_profiles(model, crafted_profiles):
    return model.inject_profiles(crafted_profiles)


def create_pretend_users(model, count, profile_length, rng_seed, excluded_items=()):
    return model.create_pretend_users(count, profile_length, rng_seed, excluded_items)


def evaluate_offline(model, test_interactions, k_values, negatives=100, rng_seed=0):
    return model.evaluate_offline(test_interactions, k_values, negatives, rng_seed)
