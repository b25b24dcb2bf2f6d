"""Policy substrate: per-node MLPs, the crafting MLP, an Elman RNN state
encoder, masked softmax sampling, and REINFORCE updates.

Everything is explicit numpy forward/backward so gradients can be checked
against central finite differences.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field

import numpy as np

N_CLIP_LEVELS = 10
CLIP_LEVELS = tuple((i + 1) / 10.0 for i in range(N_CLIP_LEVELS))


class PolicyError(Exception):
    pass


class MLPParams:
    """Tanh hidden layers, linear output (logits)."""

    def __init__(self, sizes, rng=None, init_std=0.1):
        self.sizes = tuple(sizes)
        rng = rng or np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(rng.normal(0.0, init_std, size=(fan_out, fan_in)))
            self.biases.append(rng.normal(0.0, init_std, size=fan_out))

    def params(self):
        return self.weights + self.biases

    def zero_grads(self):
        return [np.zeros_like(p) for p in self.params()]


class RNNParams:
    """Elman recurrence h_t = tanh(Wx x_t + Wh h_{t-1} + b), h_0 = 0."""

    def __init__(self, input_dim, hidden_dim, rng=None, init_std=0.1):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        rng = rng or np.random.default_rng(0)
        self.Wx = rng.normal(0.0, init_std, size=(hidden_dim, input_dim))
        self.Wh = rng.normal(0.0, init_std, size=(hidden_dim, hidden_dim))
        self.b = rng.normal(0.0, init_std, size=hidden_dim)

    def params(self):
        return [self.Wx, self.Wh, self.b]

    def zero_grads(self):
        return [np.zeros_like(p) for p in self.params()]


def mlp_forward(params: MLPParams, x, cache=None):
    """Forward pass; if `cache` is a list it receives per-layer activations."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.sizes[0]:
        raise PolicyError(f"input dim {x.shape[-1]} != expected {params.sizes[0]}")
    h = x
    if cache is not None:
        cache.append(h)
    last = len(params.weights) - 1
    for li, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = W @ h + b
        if li != last:
            h = np.tanh(h)
        if cache is not None:
            cache.append(h)
    return h


def mlp_backward(params: MLPParams, cache, dlogits):
    """Given the forward cache and dL/dlogits, return (param grads, dL/dinput)."""
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    d = np.asarray(dlogits, dtype=float)
    last = len(params.weights) - 1
    for li in range(last, -1, -1):
        a_in = cache[li]
        grads_w[li] = np.outer(d, a_in)
        grads_b[li] = d.copy()
        d = params.weights[li].T @ d
        if li > 0:
            d = d * (1.0 - cache[li] ** 2)  # tanh'
    return grads_w + grads_b, d


def masked_softmax(logits, mask):
    """Softmax over eligible entries only; masked entries get exactly 0."""
    logits = np.asarray(logits, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise PolicyError("all entries masked")
    probs = np.zeros_like(logits)
    z = logits[mask]
    z = z - z.max()
    e = np.exp(z)
    probs[mask] = e / e.sum()
    return probs


def masked_log_prob(logits, mask, index):
    z = logits[mask]
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    return float(logits[index] - lse)


def rnn_encode(params: RNNParams, sequence, cache=None):
    """Encode a sequence of vectors; empty sequence yields the zero state."""
    h = np.zeros(params.hidden_dim)
    if cache is not None:
        cache.append(h)
    for x in sequence:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != params.input_dim:
            raise PolicyError(f"input dim {x.shape[-1]} != expected {params.input_dim}")
        h = np.tanh(params.Wx @ x + params.Wh @ h + params.b)
        if cache is not None:
            cache.append(h)
    return h


def rnn_backward(params: RNNParams, sequence, cache, dh_per_step):
    """Backprop through time.

    `cache` holds h_0..h_T from rnn_encode; `dh_per_step[t]` is dL/dh_t for
    t in 1..T (index t-1 in the list). Returns param grads [dWx, dWh, db].
    """
    dWx = np.zeros_like(params.Wx)
    dWh = np.zeros_like(params.Wh)
    db = np.zeros_like(params.b)
    T = len(sequence)
    dh = np.zeros(params.hidden_dim)
    for t in range(T, 0, -1):
        dh = dh + dh_per_step[t - 1]
        dz = dh * (1.0 - cache[t] ** 2)
        dWx += np.outer(dz, np.asarray(sequence[t - 1], dtype=float))
        dWh += np.outer(dz, cache[t - 1])
        db += dz
        dh = params.Wh.T @ dz
    return [dWx, dWh, db]


@dataclass
class PolicyBundle:
    """All learnable state: lazily-created per-node MLPs, the crafting MLP,
    the RNN encoder, and the reward baseline."""

    embed_dim: int
    hidden_dim: int = None
    learning_rate: float = 0.001
    discount: float = 0.6
    baseline_decay: float = 0.9
    init_seed: int = 0
    node_params: dict = field(default_factory=dict)  # node_id -> MLPParams
    crafting: MLPParams = None
    rnn: RNNParams = None
    baseline: float = 0.0
    baseline_initialized: bool = False
    baselines: dict = field(default_factory=dict)  # per-target-item averages

    def __post_init__(self):
        e = self.embed_dim
        if self.hidden_dim is None:
            self.hidden_dim = e
        h = self.hidden_dim
        if self.rnn is None:
            rng = np.random.default_rng((self.init_seed, 1))
            self.rnn = RNNParams(e, h, rng=rng)
        if self.crafting is None:
            rng = np.random.default_rng((self.init_seed, 2))
            self.crafting = MLPParams((2 * e, 2 * e, N_CLIP_LEVELS), rng=rng)

    def node_policy(self, node_id, n_children):
        key = node_id
        if key not in self.node_params:
            rng = np.random.default_rng((self.init_seed, 3, node_id))
            in_dim = self.embed_dim + self.hidden_dim
            self.node_params[key] = MLPParams((in_dim, 2 * self.embed_dim, n_children), rng=rng)
        params = self.node_params[key]
        if params.sizes[-1] != n_children:
            raise PolicyError(
                f"node {node_id}: policy output {params.sizes[-1]} != child count {n_children}"
            )
        return params

    def update_baseline(self, mean_return):
        if not self.baseline_initialized:
            self.baseline = float(mean_return)
            self.baseline_initialized = True
        else:
            d = self.baseline_decay
            self.baseline = d * self.baseline + (1.0 - d) * float(mean_return)

    def baseline_for(self, target_item):
        """Per-item baseline when seen before, else the global one."""
        if target_item in self.baselines:
            return self.baselines[target_item]
        return self.baseline if self.baseline_initialized else 0.0

    def update_baseline_for(self, target_item, mean_return):
        if target_item in self.baselines:
            d = self.baseline_decay
            self.baselines[target_item] = (
                d * self.baselines[target_item] + (1.0 - d) * float(mean_return)
            )
        else:
            self.baselines[target_item] = float(mean_return)

    def save(self, path, rng_state=None):
        with open(path, "wb") as fh:
            pickle.dump({"bundle": self, "rng_state": rng_state}, fh)

    @staticmethod
    def load(path):
        with open(path, "rb") as fh:
            blob = pickle.load(fh)
        return blob["bundle"], blob.get("rng_state")


@dataclass
class PathStep:
    """One root-to-leaf level: which node, which children were eligible,
    which child was taken."""
    node_id: int
    child_mask: tuple
    chosen: int


@dataclass
class TrajectoryStep:
    user_id: object
    path: list            # list of PathStep; None when the step was random-seeded
    clip_index: int
    log_prob_path: float
    log_prob_clip: float
    reward: float = 0.0
    ret: float = 0.0


@dataclass
class Trajectory:
    target_item: object
    steps: list = field(default_factory=list)

    def compute_returns(self, discount):
        g = 0.0
        for step in reversed(self.steps):
            g = step.reward + discount * g
            step.ret = g


def select_path(tree, working_mask, bundle: PolicyBundle, item_vec, state_vec, rng):
    """Sample one root-to-leaf path with masked per-node softmax policies.

    `state_vec` is the RNN encoding of already-selected users. Returns
    (leaf user_id, total log-probability, list of PathStep).
    """
    x = np.concatenate([item_vec, state_vec])
    node_id = tree.root
    log_prob = 0.0
    records = []
    while not tree.nodes[node_id].is_leaf:
        node = tree.nodes[node_id]
        mask = np.array(working_mask.child_eligibility(node_id), dtype=bool)
        params = bundle.node_policy(node_id, len(node.children))
        logits = mlp_forward(params, x)
        probs = masked_softmax(logits, mask)
        chosen = int(rng.choice(len(probs), p=probs))
        log_prob += masked_log_prob(logits, mask, chosen)
        records.append(PathStep(node_id, tuple(bool(m) for m in mask), chosen))
        node_id = node.children[chosen]
    return tree.nodes[node_id].user_id, log_prob, records


def crafting_forward(bundle: PolicyBundle, user_vec, item_vec):
    logits = mlp_forward(bundle.crafting, np.concatenate([user_vec, item_vec]))
    return masked_softmax(logits, np.ones(N_CLIP_LEVELS, dtype=bool))


def trajectory_objective(bundle: PolicyBundle, tree, trajectory: Trajectory,
                         user_vectors, item_vec, baseline, compute_grads=True):
    """Replay a trajectory's forward passes and return the REINFORCE
    surrogate J = sum_t (G_t - b) * (log pi_path + log pi_craft), plus its
    analytic gradients with respect to every parameter touched.

    The same replay backs both reinforce_update and the finite-difference
    gradient tests.
    """
    item_vec = np.asarray(item_vec, dtype=float)
    seq = [np.asarray(user_vectors[s.user_id], dtype=float) for s in trajectory.steps]
    rnn_cache = []
    rnn_encode(bundle.rnn, seq, cache=rnn_cache)

    J = 0.0
    grads = {}   # ("node", id) | ("craft",) | ("rnn",) -> list of arrays
    dh_per_step = [np.zeros(bundle.hidden_dim) for _ in seq]

    def accumulate(key, params, new):
        if key not in grads:
            grads[key] = params.zero_grads()
        for g, n in zip(grads[key], new):
            g += n

    for t, step in enumerate(trajectory.steps):
        adv = step.ret - baseline
        x_state = rnn_cache[t]  # encoding of users selected before step t
        state_in = np.concatenate([item_vec, x_state])
        if step.path is not None:
            for rec in step.path:
                node = tree.nodes[rec.node_id]
                params = bundle.node_policy(rec.node_id, len(node.children))
                cache = []
                logits = mlp_forward(params, state_in, cache=cache)
                mask = np.array(rec.child_mask, dtype=bool)
                probs = masked_softmax(logits, mask)
                J += adv * masked_log_prob(logits, mask, rec.chosen)
                if compute_grads:
                    dlogits = -probs
                    dlogits[rec.chosen] += 1.0
                    dlogits *= adv
                    pgrads, dinput = mlp_backward(params, cache, dlogits)
                    accumulate(("node", rec.node_id), params, pgrads)
                    if t > 0:
                        dh_per_step[t - 1] += dinput[bundle.embed_dim:]
        # crafting action (absent when clipping was disabled for this step)
        if step.clip_index is not None:
            user_vec = np.asarray(user_vectors[step.user_id], dtype=float)
            craft_in = np.concatenate([user_vec, item_vec])
            cache = []
            logits = mlp_forward(bundle.crafting, craft_in, cache=cache)
            full = np.ones(N_CLIP_LEVELS, dtype=bool)
            probs = masked_softmax(logits, full)
            J += adv * masked_log_prob(logits, full, step.clip_index)
            if compute_grads:
                dlogits = -probs
                dlogits[step.clip_index] += 1.0
                dlogits *= adv
                pgrads, _ = mlp_backward(bundle.crafting, cache, dlogits)
                accumulate(("craft",), bundle.crafting, pgrads)

    if compute_grads and seq:
        rnn_grads = rnn_backward(bundle.rnn, seq, rnn_cache, dh_per_step)
        key = ("rnn",)
        grads[key] = rnn_grads
    return J, grads


def reinforce_update(bundle: PolicyBundle, trajectories, tree, user_vectors,
                     item_vecs):
    """One ascent step on the REINFORCE surrogate over the given trajectories.

    `item_vecs` maps target item -> embedding. Updates the moving-average
    baseline afterwards. Returns the summed surrogate objective.
    """
    total = {}
    J_sum = 0.0
    returns = []
    for traj in trajectories:
        returns.extend(s.ret for s in traj.steps)
        # per-item baseline: returns differ far more across target items
        # than across episodes of the same item
        baseline = bundle.baseline_for(traj.target_item)
        J, grads = trajectory_objective(
            bundle, tree, traj, user_vectors, item_vecs[traj.target_item], baseline
        )
        J_sum += J
        for key, gs in grads.items():
            if key not in total:
                total[key] = gs
            else:
                for a, g in zip(total[key], gs):
                    a += g

    lr = bundle.learning_rate
    for key, gs in total.items():
        if key[0] == "node":
            params = bundle.node_params[key[1]]
        elif key[0] == "craft":
            params = bundle.crafting
        else:
            params = bundle.rnn
        for p, g in zip(params.params(), gs):
            if not np.all(np.isfinite(g)):
                raise PolicyError(f"non-finite gradient for {key}")
            p += lr * g
    if returns:
        bundle.update_baseline(float(np.mean(returns)))
        for traj in trajectories:
            if traj.steps:
                bundle.update_baseline_for(
                    traj.target_item, float(np.mean([s.ret for s in traj.steps]))
                )
    return J_sum
