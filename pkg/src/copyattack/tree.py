"""Balanced divisive clustering tree over source users, with per-target-item
eligibility masks for path sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class TreeError(Exception):
    pass


def _kmeanspp_init(X, c, rng):
    n = X.shape[0]
    centroids = np.empty((c, X.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = X[first]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for k in range(1, c):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[k] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centroids[k]) ** 2, axis=1))
    return centroids


def balanced_kmeans(vectors, c, rng_seed=0, max_iters=50):
    """Cluster `vectors` into c groups of size ceil(n/c) or floor(n/c).

    Plain Lloyd iterations find centroids, then points are reassigned by
    globally sorting (point, centroid) distances ascending and greedily
    filling clusters: up to floor(n/c) freely, with n mod c overflow slots.
    """
    X = np.asarray(vectors, dtype=float)
    n = X.shape[0]
    if n < c or c < 2:
        raise TreeError(f"need n >= c >= 2, got n={n}, c={c}")
    rng = np.random.default_rng(rng_seed)
    centroids = _kmeanspp_init(X, c, rng)
    for _ in range(max_iters):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        new = centroids.copy()
        for k in range(c):
            members = X[assign == k]
            if len(members):
                new[k] = members.mean(axis=0)
        if np.allclose(new, centroids):
            centroids = new
            break
        centroids = new

    floor, rem = divmod(n, c)
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    order = np.argsort(d2, axis=None, kind="stable")
    assignment = np.full(n, -1, dtype=int)
    sizes = np.zeros(c, dtype=int)
    overflow_used = 0
    placed = 0
    for flat in order:
        p, k = divmod(int(flat), c)
        if assignment[p] >= 0:
            continue
        if sizes[k] < floor:
            assignment[p] = k
        elif sizes[k] == floor and overflow_used < rem:
            assignment[p] = k
            overflow_used += 1
        else:
            continue
        sizes[k] += 1
        placed += 1
        if placed == n:
            break
    return assignment


@dataclass
class TreeNode:
    node_id: int
    children: list = field(default_factory=list)  # node ids
    parent: int = -1
    user_id: object = None                        # set on leaves only

    @property
    def is_leaf(self):
        return self.user_id is not None


@dataclass
class ClusterTree:
    branching: int
    depth: int
    nodes: list                 # TreeNode, indexed by node_id; root is 0
    leaf_of_user: dict          # user_id -> leaf node id

    @property
    def root(self):
        return 0

    def internal_ids(self):
        return [n.node_id for n in self.nodes if not n.is_leaf]

    def leaf_ids(self):
        return [n.node_id for n in self.nodes if n.is_leaf]

    def leaf_count_below(self, node_id):
        node = self.nodes[node_id]
        if node.is_leaf:
            return 1
        return sum(self.leaf_count_below(ch) for ch in node.children)

    def to_json(self):
        return json.dumps(
            [
                {
                    "id": n.node_id,
                    "children": n.children,
                    "user": None if n.user_id is None else str(n.user_id),
                }
                for n in self.nodes
            ]
        )


def build_tree(user_embeddings, c, rng_seed=0, max_iters=50):
    """Top-down balanced split of users into a tree with branching factor c.

    `user_embeddings` maps user_id -> vector. Clusters of size <= c become
    leaf children of a single internal node.
    """
    user_ids = sorted(user_embeddings)
    n = len(user_ids)
    if n < 2:
        raise TreeError("need at least 2 users")
    if c < 2:
        raise TreeError("branching factor must be >= 2")
    X = np.asarray([user_embeddings[u] for u in user_ids], dtype=float)

    nodes = []
    leaf_of_user = {}

    def new_node(parent):
        node = TreeNode(node_id=len(nodes), parent=parent)
        nodes.append(node)
        return node

    def grow(indices, parent, seed):
        node = new_node(parent)
        if len(indices) <= c:
            for i in indices:
                leaf = new_node(node.node_id)
                leaf.user_id = user_ids[i]
                leaf_of_user[user_ids[i]] = leaf.node_id
                node.children.append(leaf.node_id)
            return node.node_id
        assignment = balanced_kmeans(X[indices], c, rng_seed=seed, max_iters=max_iters)
        for k in range(c):
            sub = [indices[j] for j in range(len(indices)) if assignment[j] == k]
            child_id = grow(sub, node.node_id, seed * 31 + k + 1)
            node.children.append(child_id)
        return node.node_id

    grow(list(range(n)), -1, rng_seed)
    # integer ceil(log_c n); avoids float log edge cases at exact powers
    depth = 1
    while c ** depth < n:
        depth += 1
    return ClusterTree(branching=c, depth=depth, nodes=nodes, leaf_of_user=leaf_of_user)


@dataclass
class TreeMask:
    target_item: object
    eligible: np.ndarray          # bool per node id
    eligible_leaves: np.ndarray   # int per node id: eligible leaf count below

    def dump_ineligible(self):
        return [int(i) for i in np.flatnonzero(~self.eligible)]


def apply_mask(tree: ClusterTree, target_item, source_profiles):
    """Eligibility per node: a leaf is eligible iff its user's profile
    contains the target item; internal nodes inherit any-child eligibility."""
    n = len(tree.nodes)
    eligible = np.zeros(n, dtype=bool)
    counts = np.zeros(n, dtype=int)

    def visit(node_id):
        node = tree.nodes[node_id]
        if node.is_leaf:
            profile = source_profiles[node.user_id]
            items = profile.items if hasattr(profile, "items") and not isinstance(profile, dict) else profile
            hit = target_item in items
            eligible[node_id] = hit
            counts[node_id] = 1 if hit else 0
        else:
            total = 0
            for ch in node.children:
                visit(ch)
                total += counts[ch]
            counts[node_id] = total
            eligible[node_id] = total > 0

    visit(tree.root)
    if counts[tree.root] == 0:
        raise TreeError(
            f"target item {target_item!r} appears in no source profile; "
            "masking would eliminate the whole tree"
        )
    return TreeMask(target_item, eligible, counts)


def eligible_leaf_count(tree: ClusterTree, mask: TreeMask):
    return int(mask.eligible_leaves[tree.root])


class WorkingMask:
    """Per-episode view of a TreeMask that supports blocking already-selected
    leaves in O(depth) without mutating the cached mask."""

    def __init__(self, tree: ClusterTree, mask: TreeMask):
        self.tree = tree
        self.counts = mask.eligible_leaves.copy()

    def eligible(self, node_id):
        return self.counts[node_id] > 0

    def block_leaf(self, leaf_id):
        node_id = leaf_id
        while node_id != -1:
            self.counts[node_id] -= 1
            node_id = self.tree.nodes[node_id].parent

    def child_eligibility(self, node_id):
        return [self.counts[ch] > 0 for ch in self.tree.nodes[node_id].children]
