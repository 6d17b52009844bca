"""Temporal relation optimal transport for cross-user activity recognition."""

from .adapt import MappedAtlas, barycentric_map, barycentric_project, coral_align, transform_samples
from .errors import TrotError
from .harness import (
    METHODS,
    AdaptReport,
    TaskSpec,
    default_grid,
    knn1_classify,
    matrix_to_json,
    render_table,
    run_matrix,
    run_task,
    temporal_split,
)
from .hmm import (
    ActivityHMM,
    GaussianState,
    TemporalAtlas,
    assign_dataset_states,
    assign_states,
    atlas_from_json,
    atlas_to_json,
    build_atlas,
    fit_activity_hmm,
)
from .ot_core import (
    Coupling,
    OrderGroups,
    TrotHyperparams,
    cost_matrix,
    entropy,
    gcg_solve,
    group_sparse,
    order_groups,
    pairwise_sq_dists,
    sinkhorn,
    temporal_reg,
)
from .preprocess import (
    FeatureDataset,
    FeatureWindow,
    Recording,
    build_features,
    extract_features,
    load_features,
    load_recording,
    magnitude,
    maxabs_fit_apply,
    save_features,
    segment,
)
from .synth import SynthSpec, adversarial_user_shift, generate_pair, generate_user, state_grid

__version__ = "0.1.0"
