"""Black-box recommender injection-attack sandbox: copy and craft real
source-domain user profiles into a target recommender via a masked
hierarchical policy-gradient agent, and measure target-item promotion."""

from .dataset import (
    CrossDomainDataset,
    InteractionRecord,
    SplitSpec,
    UserProfile,
    build_cross_domain,
    build_profiles,
    filter_by_rating,
    load_interactions,
    select_target_items,
    split_dataset,
)
from .engine import (
    AttackReport,
    baseline_attack,
    compute_reward,
    craft_profile,
    run_episode,
    train_agent,
)
from .metrics import hit_ratio, ndcg_single, popularity_deciles, promotion_uplift
from .mf import EmbeddingTable, MFConfig, holdout_auc, score, train_mf
from .policy import (
    CLIP_LEVELS,
    MLPParams,
    PolicyBundle,
    RNNParams,
    Trajectory,
    crafting_forward,
    masked_softmax,
    mlp_forward,
    reinforce_update,
    rnn_encode,
    select_path,
)
from .target import fit_target
from .tree import apply_mask, balanced_kmeans, build_tree, eligible_leaf_count

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
