"""Attack orchestration: episode loop with budget and query feedback,
profile crafting, agent training, and the baseline attackers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .policy import (
    CLIP_LEVELS,
    PolicyBundle,
    Trajectory,
    TrajectoryStep,
    crafting_forward,
    reinforce_update,
    select_path,
    rnn_encode,
)
from .tree import ClusterTree, TreeMask, TreeNode, WorkingMask, apply_mask


class AttackError(Exception):
    pass


@dataclass
class EpisodeState:
    target_item: object
    budget: int = 30
    query_interval: int = 3
    t: int = 0
    selected: list = field(default_factory=list)
    injected: dict = field(default_factory=dict)
    terminal: bool = False
    reason: str = ""


@dataclass
class AttackReport:
    target_item: object
    method: str = ""
    reward_curve: list = field(default_factory=list)   # (t, reward)
    ledger: list = field(default_factory=list)         # per injection
    n_injected: int = 0
    item_budget: int = 0
    terminal_reason: str = ""
    hr_before: float = None
    hr_after: float = None

    @property
    def avg_items_per_profile(self):
        return self.item_budget / self.n_injected if self.n_injected else 0.0

    def to_dict(self):
        return {
            "target_item": str(self.target_item),
            "method": self.method,
            "reward_curve": self.reward_curve,
            "ledger": self.ledger,
            "n_injected": self.n_injected,
            "item_budget": self.item_budget,
            "avg_items_per_profile": self.avg_items_per_profile,
            "terminal_reason": self.terminal_reason,
            "hr_before": self.hr_before,
            "hr_after": self.hr_after,
        }


def round_half_up(x):
    return int(math.floor(x + 0.5))


def craft_profile(raw_profile, target_item, w):
    """Keep a contiguous window of round(w * len) items centered on the
    target item, clamped at the profile ends with spill to the other side."""
    items = list(raw_profile)
    if target_item not in items:
        raise AttackError(f"target item {target_item!r} not in raw profile")
    if not any(abs(w - lvl) < 1e-9 for lvl in CLIP_LEVELS):
        raise AttackError(f"clip level {w} not in {CLIP_LEVELS}")
    l = len(items)
    kept = max(1, round_half_up(w * l))
    pos = items.index(target_item)
    before = (kept - 1) // 2
    start = min(max(pos - before, 0), l - kept)
    return items[start:start + kept]


def compute_reward(feedback, target_item, k):
    """Mean per-pretend-user indicator that the target item made their Top-k."""
    if not feedback:
        raise AttackError("empty pretend-user feedback")
    hits = [1.0 if target_item in ranked[:k] else 0.0 for ranked in feedback.values()]
    return float(np.mean(hits))


def all_eligible_mask(tree: ClusterTree, target_item):
    """Mask with every leaf eligible (the no-mask ablation)."""
    n = len(tree.nodes)
    counts = np.zeros(n, dtype=int)
    for node in reversed(tree.nodes):
        if node.is_leaf:
            counts[node.node_id] = 1
        else:
            counts[node.node_id] = sum(counts[ch] for ch in node.children)
    return TreeMask(target_item, counts > 0, counts)


def flat_tree(user_ids):
    """Degenerate depth-1 tree: one root whose children are all users.

    Backs the flat-softmax baseline so the same policy machinery applies
    with a single n^B-way decision.
    """
    user_ids = sorted(user_ids)
    root = TreeNode(node_id=0)
    nodes = [root]
    leaf_of_user = {}
    for u in user_ids:
        leaf = TreeNode(node_id=len(nodes), parent=0, user_id=u)
        nodes.append(leaf)
        root.children.append(leaf.node_id)
        leaf_of_user[u] = leaf.node_id
    return ClusterTree(branching=len(user_ids), depth=1, nodes=nodes,
                       leaf_of_user=leaf_of_user)


def _uniform_eligible_leaf(tree, working, rng):
    """Walk down choosing uniformly by eligible-leaf counts; uniform over
    eligible leaves overall."""
    node_id = tree.root
    while not tree.nodes[node_id].is_leaf:
        children = tree.nodes[node_id].children
        weights = np.array([working.counts[ch] for ch in children], dtype=float)
        total = weights.sum()
        if total <= 0:
            raise AttackError("no eligible leaf remains")
        node_id = children[int(rng.choice(len(children), p=weights / total))]
    return tree.nodes[node_id].user_id


def run_episode(model, pretend_ids, tree, mask, bundle: PolicyBundle, embeddings,
                target_item, source_profiles, budget=30, query_interval=3, k=20,
                rng=None, success_threshold=1.0, craft=True, learn=True,
                method="copyattack"):
    """One attack episode against `model` (mutated in place; snapshot first).

    Every `query_interval` injections all pretend users are queried at Top-k
    and the observed hit fraction becomes the shared reward of the steps
    since the previous query. Returns (Trajectory, AttackReport).
    """
    rng = rng or np.random.default_rng(0)
    traj = Trajectory(target_item=target_item)
    report = AttackReport(target_item=target_item, method=method)
    state = EpisodeState(target_item, budget=budget, query_interval=query_interval)
    working = WorkingMask(tree, mask)
    item_vec = embeddings.item_vectors[target_item]
    user_vecs = embeddings.user_vectors

    pending = []  # steps awaiting a reward observation
    while state.t < budget and not state.terminal:
        if not working.eligible(tree.root):
            state.terminal, state.reason = True, "exhausted"
            break
        if state.t == 0 or not learn:
            # seed action (and non-learning methods): uniform eligible leaf
            user_id = _uniform_eligible_leaf(tree, working, rng)
            path, log_p = None, 0.0
        else:
            x = rnn_encode(bundle.rnn, [user_vecs[u] for u in state.selected])
            user_id, log_p, path = select_path(tree, working, bundle, item_vec, x, rng)
        working.block_leaf(tree.leaf_of_user[user_id])
        state.selected.append(user_id)

        raw = source_profiles[user_id]
        raw_items = raw.items if hasattr(raw, "items") and not isinstance(raw, dict) else list(raw)
        if craft and target_item in raw_items:
            probs = crafting_forward(bundle, user_vecs[user_id], item_vec)
            clip_index = int(rng.choice(len(probs), p=probs))
            w = CLIP_LEVELS[clip_index]
            crafted = craft_profile(raw_items, target_item, w)
            log_clip = float(np.log(probs[clip_index]))
        else:
            clip_index, w, crafted, log_clip = None, 1.0, list(raw_items), 0.0

        inj_id = f"__inj_{state.t}_{user_id}"
        model.inject_profiles({inj_id: crafted})
        state.injected[inj_id] = crafted
        report.ledger.append({
            "source_user": str(user_id),
            "clip_level": w,
            "raw_length": len(raw_items),
            "crafted_length": len(crafted),
        })
        report.n_injected += 1
        report.item_budget += len(crafted)

        step = TrajectoryStep(
            user_id=user_id, path=path, clip_index=clip_index,
            log_prob_path=log_p, log_prob_clip=log_clip,
        )
        traj.steps.append(step)
        pending.append(step)
        state.t += 1

        if state.t % query_interval == 0 or state.t == budget:
            feedback = {u: model.query_topk(u, k) for u in pretend_ids}
            reward = compute_reward(feedback, target_item, k)
            for s in pending:
                s.reward = reward
            pending = []
            report.reward_curve.append((state.t, reward))
            if reward >= success_threshold:
                state.terminal, state.reason = True, "success"

    if not state.reason:
        state.reason = "budget"
    report.terminal_reason = state.reason
    traj.compute_returns(bundle.discount)
    return traj, report


def baseline_attack(kind, model, pretend_ids, dataset_source_profiles, embeddings,
                    target_item, budget=30, query_interval=3, k=20, rng=None):
    """Non-learning attackers.

    random: uniform source users, raw profiles. target_pct(p): uniform among
    users whose profile contains the target item, fixed clip level p/100.
    """
    rng = rng or np.random.default_rng(0)
    report = AttackReport(target_item=target_item, method=kind)
    profiles = dataset_source_profiles

    def items_of(u):
        p = profiles[u]
        return p.items if hasattr(p, "items") and not isinstance(p, dict) else list(p)

    if kind == "random":
        pool = sorted(profiles)
        fixed_w = None
    elif kind.startswith("target"):
        pct = int(kind[len("target"):])
        if pct not in (40, 70, 100):
            raise AttackError(f"unsupported target percentage {pct}")
        pool = sorted(u for u in profiles if target_item in items_of(u))
        fixed_w = pct / 100.0
        if not pool:
            raise AttackError("no source profile contains the target item")
    else:
        raise AttackError(f"unknown baseline kind {kind!r}")

    order = rng.permutation(len(pool))
    chosen = [pool[i] for i in order[: min(budget, len(pool))]]
    for t, user_id in enumerate(chosen):
        raw_items = items_of(user_id)
        if fixed_w is not None and fixed_w < 1.0:
            crafted = craft_profile(raw_items, target_item, fixed_w)
        else:
            crafted = list(raw_items)
        inj_id = f"__inj_{t}_{user_id}"
        model.inject_profiles({inj_id: crafted})
        report.ledger.append({
            "source_user": str(user_id),
            "clip_level": fixed_w if fixed_w is not None else 1.0,
            "raw_length": len(raw_items),
            "crafted_length": len(crafted),
        })
        report.n_injected += 1
        report.item_budget += len(crafted)
        if (t + 1) % query_interval == 0 or t + 1 == len(chosen):
            feedback = {u: model.query_topk(u, k) for u in pretend_ids}
            report.reward_curve.append((t + 1, compute_reward(feedback, target_item, k)))
    report.terminal_reason = "budget"
    return report


def train_agent(model_snapshot, pretend_ids, tree, bundle: PolicyBundle, embeddings,
                source_profiles, target_items, episodes_per_item=5, budget=30,
                query_interval=3, k=20, rng=None, success_threshold=1.0,
                craft=True, use_mask=True):
    """Episode loop with learning: each episode starts from a fresh copy of
    the pre-attack model, runs one attack, and applies a REINFORCE update.

    Returns (bundle, learning_curves, last_reports) where learning_curves
    maps target item -> per-episode cumulative reward.
    """
    rng = rng or np.random.default_rng(0)
    curves = {v: [] for v in target_items}
    masks = {}
    last_reports = {}
    item_vecs = {v: embeddings.item_vectors[v] for v in target_items}
    for v in target_items:
        masks[v] = apply_mask(tree, v, source_profiles) if use_mask \
            else all_eligible_mask(tree, v)
    for _ in range(episodes_per_item):
        for v in target_items:
            model = model_snapshot.snapshot()
            traj, report = run_episode(
                model, pretend_ids, tree, masks[v], bundle, embeddings, v,
                source_profiles, budget=budget, query_interval=query_interval,
                k=k, rng=rng, success_threshold=success_threshold, craft=craft,
                learn=True,
            )
            reinforce_update(bundle, [traj], tree, embeddings.user_vectors, item_vecs)
            curves[v].append(sum(r for _, r in report.reward_curve))
            last_reports[v] = report
    return bundle, curves, last_reports
