"""Ranking metrics and promotion-uplift measurement."""

from __future__ import annotations

import math

import numpy as np


def hit_ratio(ranked_list, item, k):
    return 1 if item in ranked_list[:k] else 0


def ndcg_single(ranked_list, item, k):
    """NDCG for a single relevant item: 1/log2(pos+1) within the cutoff."""
    try:
        pos = ranked_list.index(item) + 1
    except ValueError:
        return 0.0
    if pos > k:
        return 0.0
    return 1.0 / math.log2(pos + 1)


def promotion_uplift(model_before, model_after, target_item, organic_users, k,
                     negatives=100, rng_seed=0):
    """Hit rate of the target item in organic users' Top-k, ranked among the
    same sampled negatives before and after the injection."""
    if not organic_users:
        raise ValueError("empty organic user sample")

    def hr(model):
        hits = 0
        rng = np.random.default_rng(rng_seed)
        t_idx = model.item_index[target_item]
        n_items = len(model.items)
        for u in organic_users:
            own_idx = [model.item_index[i] for i in model.profiles[u]
                       if i in model.item_index]
            if t_idx in own_idx:
                continue
            scores = model._scores(u)
            mask = np.ones(n_items, dtype=bool)
            mask[own_idx] = False
            mask[t_idx] = False
            pool = np.flatnonzero(mask)
            n_neg = min(negatives, len(pool))
            cand = pool[rng.choice(len(pool), size=n_neg, replace=False)]
            s, st = scores[cand], scores[t_idx]
            # items are kept sorted, so index order is the ascending-id tie-break
            ahead = int(np.sum((s > st) | ((s == st) & (cand < t_idx))))
            if ahead < k:
                hits += 1
        return hits / len(organic_users)

    model_before._pre_query_refresh()
    model_after._pre_query_refresh()
    return hr(model_before), hr(model_after)


def popularity_deciles(items, interactions):
    """Split items into 10 near-equal groups by descending interaction count,
    ties broken by ascending item id."""
    if len(items) < 10:
        raise ValueError("need at least 10 items for deciles")
    count = {}
    for rec in interactions:
        i = rec.item_id if hasattr(rec, "item_id") else rec[1]
        count[i] = count.get(i, 0) + 1
    ordered = sorted(items, key=lambda i: (-count.get(i, 0), i))
    n = len(ordered)
    base, rem = divmod(n, 10)
    groups = []
    start = 0
    for g in range(10):
        size = base + (1 if g < rem else 0)
        groups.append(ordered[start:start + size])
        start += size
    return groups
