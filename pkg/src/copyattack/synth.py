"""Synthetic cross-domain benchmark with planted preference structure.

Two domains share one item catalog. Target users interact with popular items
under a zipf-like skew; a small pool of "tail" items has near-zero organic
degree and supplies the attackable target items. Source users split into
strong profiles (their items mirror the popular head, so injecting them ties
the target item to items the observer accounts actually hold) and weak
profiles (uniform filler items). Each source user carries a few tail items so
masking leaves a workable leaf set per target item.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import InteractionRecord, build_cross_domain


@dataclass
class BenchmarkConfig:
    n_target_users: int = 1000
    n_source_users: int = 2000
    n_items: int = 500
    n_tail_items: int = 50
    head_size: int = 60          # popular head used by strong source profiles
    strong_fraction: float = 0.3
    tail_per_strong: int = 6     # strong users carry more tail items, so the
    tail_per_weak: int = 3       # eligible pool has enough of them per target
    target_len: tuple = (6, 10)  # short organic profiles keep organic
                                 # co-occurrence weak enough that a 30-profile
                                 # injection reaches the full-catalog top 20
    core_len: tuple = (6, 12)
    noise_len: tuple = (12, 12)
    distractor_pool: int = 12    # shared noise items; repeated across every
                                 # injected profile they ride the same
                                 # co-occurrence boost as the target item and
                                 # overtake it unless clipped away
    distractor_degree: int = 2   # organic degree below the tail items', so a
                                 # boosted distractor outscores the target
    popularity_exponent: float = 1.5
    tail_target_degree: tuple = (4, 8)   # organic degree of tail items in target
    seed: int = 0


@dataclass
class Benchmark:
    target_records: list
    source_records: list
    tail_items: list
    strong_users: set
    config: BenchmarkConfig = None
    meta: dict = field(default_factory=dict)


def _records(rows):
    return [InteractionRecord(u, i, 5, t) for u, i, t in rows]


def make_benchmark(config: BenchmarkConfig = None):
    cfg = config or BenchmarkConfig()
    rng = np.random.default_rng(cfg.seed)
    items = [f"i{j:04d}" for j in range(cfg.n_items)]
    n_main = cfg.n_items - cfg.n_tail_items
    main_items = items[:n_main]
    tail_items = items[n_main:]

    pop = np.array([(r + 1.0) ** -cfg.popularity_exponent for r in range(n_main)])
    head_items = main_items[:cfg.head_size]
    head_w = pop[:cfg.head_size] / pop[:cfg.head_size].sum()
    # distractors sit just past the head by id but are removed from organic
    # sampling: with near-zero organic degree, the co-occurrence boost they
    # pick up from riding injected profiles makes them outrank the target
    distractors = main_items[cfg.head_size:cfg.head_size + cfg.distractor_pool]
    d_lo, d_hi = cfg.head_size, cfg.head_size + cfg.distractor_pool
    pop[d_lo:d_hi] = 0.0
    pop /= pop.sum()

    # target domain: popularity-skewed profiles over main items
    target_rows = []
    lo, hi = cfg.target_len
    for u in range(cfg.n_target_users):
        uid = f"tu{u:05d}"
        length = int(rng.integers(lo, hi + 1))
        picked = rng.choice(n_main, size=length, replace=False, p=pop)
        for t, j in enumerate(picked):
            target_rows.append((uid, main_items[j], t))
    # give every tail item a small organic degree so it exists in the catalog
    dlo, dhi = cfg.tail_target_degree
    for ti in tail_items:
        deg = int(rng.integers(dlo, dhi + 1))
        owners = rng.choice(cfg.n_target_users, size=deg, replace=False)
        for u in owners:
            target_rows.append((f"tu{u:05d}", ti, 10_000 + int(rng.integers(1000))))
    # a distractor's organic degree stays below every tail item's, so once
    # both ride the same injections the distractor scores higher
    for di in distractors:
        owners = rng.choice(cfg.n_target_users, size=cfg.distractor_degree,
                            replace=False)
        for u in owners:
            target_rows.append((f"tu{u:05d}", di, 20_000 + int(rng.integers(1000))))

    # source domain: strong/weak users, tail items embedded inside the core
    source_rows = []
    strong_users = set()
    clo, chi = cfg.core_len
    nlo, nhi = cfg.noise_len
    for u in range(cfg.n_source_users):
        uid = f"su{u:05d}"
        strong = rng.random() < cfg.strong_fraction
        if strong:
            strong_users.add(uid)
        core_n = int(rng.integers(clo, chi + 1))
        if strong:
            core = [head_items[j] for j in
                    rng.choice(cfg.head_size, size=min(core_n, cfg.head_size),
                               replace=False, p=head_w)]
        else:
            core_pool = np.concatenate([np.arange(d_lo), np.arange(d_hi, n_main)])
            core = [main_items[j] for j in
                    rng.choice(core_pool, size=core_n, replace=False)]
        n_tails = cfg.tail_per_strong if strong else cfg.tail_per_weak
        tails = [tail_items[j] for j in
                 rng.choice(cfg.n_tail_items, size=n_tails, replace=False)]
        # tail items sit inside the core block, noise pads both ends
        block = list(core)
        for t in tails:
            # near the block centre, so a clip window around any tail item
            # retains the core
            mid = len(block) // 2
            pos = int(rng.integers(max(0, mid - 1), min(len(block), mid + 2) + 1))
            block.insert(pos, t)
        noise_n = int(rng.integers(nlo, nhi + 1))
        # every profile pads with the same distractors (in shuffled order):
        # their boost then tracks the number of unclipped injections
        picked = rng.permutation(cfg.distractor_pool)[:min(noise_n, cfg.distractor_pool)]
        noise = [distractors[j] for j in picked if distractors[j] not in block]
        pre = noise[: len(noise) // 2]
        post = noise[len(noise) // 2:]
        seq = pre + block + post
        for t, it in enumerate(seq):
            source_rows.append((uid, it, t))

    return Benchmark(
        target_records=_records(target_rows),
        source_records=_records(source_rows),
        tail_items=tail_items,
        strong_users=strong_users,
        config=cfg,
        meta={"n_items": cfg.n_items, "head_items": head_items},
    )


def benchmark_dataset(bench: Benchmark):
    return build_cross_domain(bench.target_records, bench.source_records)


def write_benchmark_tsv(bench: Benchmark, target_path, source_path):
    for path, records in ((target_path, bench.target_records),
                          (source_path, bench.source_records)):
        with open(path, "w") as fh:
            for r in records:
                fh.write(f"{r.user_id}\t{r.item_id}\t{r.rating}\t{r.order_key}\n")
