"""Interaction-log ingestion, item alignment, profiles, splits, target sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class DatasetError(Exception):
    pass


class ParseError(DatasetError):
    pass


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    rating: int
    order_key: int


@dataclass
class UserProfile:
    user_id: str
    items: list  # item ids, ascending order_key

    def __len__(self):
        return len(self.items)


@dataclass
class ItemProfile:
    item_id: str
    users: list


@dataclass
class DomainData:
    users: list
    items: list
    user_profiles: dict  # user_id -> UserProfile
    item_profiles: dict  # item_id -> ItemProfile
    records: list = field(default_factory=list)


@dataclass
class CrossDomainDataset:
    target: DomainData
    source: DomainData
    overlap: set                 # canonical overlap item ids
    source_to_target: dict       # source item id -> target item id
    target_to_source: dict


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    validation_fraction: float = 0.1
    test_fraction: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        total = self.train_fraction + self.validation_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-12:
            raise DatasetError(f"split fractions sum to {total}, expected 1")
        if self.validation_fraction <= 0 or self.test_fraction <= 0 or self.train_fraction <= 0:
            raise DatasetError("all split fractions must be positive")


def load_interactions(path, fmt="tsv", rating_scale=(1, 5), header=False):
    """Read `user, item, rating[, timestamp]` rows into InteractionRecords.

    Missing timestamps fall back to the row index so sequence order is
    always defined.
    """
    delim = "\t" if fmt == "tsv" else ","
    records = []
    with open(path) as fh:
        lines = fh.readlines()
    start = 1 if header else 0
    for lineno, line in enumerate(lines[start:], start=start + 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(delim)]
        if len(parts) < 3:
            raise ParseError(f"line {lineno}: expected at least 3 columns, got {len(parts)}")
        user, item = parts[0], parts[1]
        try:
            rating = int(float(parts[2]))
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric rating {parts[2]!r}")
        lo, hi = rating_scale
        if not lo <= rating <= hi:
            raise ParseError(f"line {lineno}: rating {rating} outside scale [{lo},{hi}]")
        if len(parts) >= 4 and parts[3] != "":
            try:
                order_key = int(float(parts[3]))
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric timestamp {parts[3]!r}")
        else:
            order_key = lineno - 1
        records.append(InteractionRecord(user, item, rating, order_key))
    if not records:
        raise DatasetError(f"empty dataset: {path}")
    return records


def filter_by_rating(records, min_rating):
    return [r for r in records if r.rating >= min_rating]


def align_items(target_catalog, source_catalog, key="name"):
    """Match items across catalogs by key; drop ambiguous (duplicate-key) items.

    Catalogs are mappings item_id -> key attributes; for key="name" the value
    is the name string, for key="name+year" a (name, year) pair.
    Returns (source_to_target mapping, n_excluded).
    """

    def keyed(catalog):
        by_key, dupes = {}, set()
        for item_id, attrs in catalog.items():
            k = attrs if key == "name" else tuple(attrs)
            if k in by_key:
                dupes.add(k)
            else:
                by_key[k] = item_id
        for k in dupes:
            del by_key[k]
        return by_key, len(dupes)

    t_keys, t_dupes = keyed(target_catalog)
    s_keys, s_dupes = keyed(source_catalog)
    mapping = {}
    for k, sid in s_keys.items():
        if k in t_keys:
            mapping[sid] = t_keys[k]
    if not mapping:
        raise DatasetError("empty overlap between catalogs")
    return mapping, t_dupes + s_dupes


def build_profiles(records):
    """Sequence profiles per user (ordered by order_key, first occurrence wins)
    and item profiles listing interacting users."""
    per_user = {}
    for idx, rec in enumerate(records):
        per_user.setdefault(rec.user_id, []).append((rec.order_key, idx, rec.item_id))
    user_profiles = {}
    item_profiles = {}
    for user_id, entries in per_user.items():
        entries.sort()
        seen = set()
        items = []
        for _, _, item in entries:
            if item not in seen:
                seen.add(item)
                items.append(item)
        user_profiles[user_id] = UserProfile(user_id, items)
        for item in items:
            item_profiles.setdefault(item, ItemProfile(item, [])).users.append(user_id)
    return user_profiles, item_profiles


def build_domain(records):
    user_profiles, item_profiles = build_profiles(records)
    return DomainData(
        users=sorted(user_profiles),
        items=sorted(item_profiles),
        user_profiles=user_profiles,
        item_profiles=item_profiles,
        records=list(records),
    )


def build_cross_domain(target_records, source_records, source_to_target=None):
    """Assemble the two-domain dataset; source profiles are restricted to
    overlap items and rewritten to target item ids."""
    target = build_domain(target_records)
    if source_to_target is None:
        src_items = {r.item_id for r in source_records}
        overlap_ids = src_items & set(target.items)
        source_to_target = {i: i for i in overlap_ids}
    overlap = set(source_to_target.values())
    if not overlap:
        raise DatasetError("empty overlap set")
    kept = [
        InteractionRecord(r.user_id, source_to_target[r.item_id], r.rating, r.order_key)
        for r in source_records
        if r.item_id in source_to_target
    ]
    if not kept:
        raise DatasetError("no source interactions fall in the overlap set")
    source = build_domain(kept)
    target_to_source = {t: s for s, t in source_to_target.items()}
    return CrossDomainDataset(target, source, overlap, source_to_target, target_to_source)


def split_dataset(records, spec: SplitSpec):
    """Per-interaction random partition into (train, validation, test).

    Returns the three record lists plus a report dict with counts and
    cold users (users with no train interaction).
    """
    rng = np.random.default_rng(spec.rng_seed)
    u = rng.random(len(records))
    train, val, test = [], [], []
    t_cut = spec.train_fraction
    v_cut = spec.train_fraction + spec.validation_fraction
    for rec, x in zip(records, u):
        if x < t_cut:
            train.append(rec)
        elif x < v_cut:
            val.append(rec)
        else:
            test.append(rec)
    train_users = {r.user_id for r in train}
    cold = sorted({r.user_id for r in val + test} - train_users)
    report = {
        "n_train": len(train),
        "n_validation": len(val),
        "n_test": len(test),
        "cold_users": cold,
    }
    return train, val, test, report


def select_target_items(dataset: CrossDomainDataset, count, max_interactions,
                        rng_seed, train_records=None):
    """Sample `count` distinct overlap items whose target-domain (train)
    interaction count is below `max_interactions`."""
    if count == 0:
        return []
    records = train_records if train_records is not None else dataset.target.records
    degree = {}
    for rec in records:
        degree[rec.item_id] = degree.get(rec.item_id, 0) + 1
    # at least one interaction, or the item never enters the target catalog
    eligible = sorted(
        i for i in dataset.overlap if 0 < degree.get(i, 0) < max_interactions
    )
    # items must also occur in some source profile, or masking has no leaves
    eligible = [i for i in eligible if i in dataset.source.item_profiles]
    if len(eligible) < count:
        raise DatasetError(
            f"only {len(eligible)} eligible target items, need {count}"
        )
    rng = np.random.default_rng(rng_seed)
    picked = rng.choice(len(eligible), size=count, replace=False)
    return [eligible[i] for i in sorted(picked)]


def split_report_json(report):
    return json.dumps(report, indent=2, sort_keys=True)
