"""Multi-relational biomedical link prediction with per-node explanations."""

__version__ = "0.1.0"

from .kgraph import (  # noqa: F401
    EdgeList,
    GraphBuildError,
    KnowledgeGraph,
    LabelTable,
    NodeKind,
    ParseError,
    RelationKind,
    adjacency_matvec,
    assemble,
    build_from_manifest,
    load_bundle,
    mesh_expand,
    mesh_tree_edges,
    parse_edge_file,
    prune_upward_disease_gene,
    save_bundle,
)
from .model import (  # noqa: F401
    Checkpoint,
    ModelConfig,
    ModelParams,
    TrainConfig,
    TrainingError,
    forward,
    init_params,
    load_checkpoint,
    pair_loss,
    sample_negatives,
    save_checkpoint,
    score,
    train,
)
from .baselines import (  # noqa: F401
    TripletParams,
    distmult_score,
    train_baseline,
    transe_distance,
    transe_score,
)
from .attribution import (  # noqa: F401
    AttributionReport,
    AttributionRequest,
    export_subgraph,
    integrated_gradients,
    neighborhood,
    rank_proteins,
)
from .evaluation import (  # noqa: F401
    EvalRecord,
    FoldPlan,
    MetricResult,
    SyntheticSpec,
    cross_validate,
    explainability_eval,
    export_embeddings,
    generate_synthetic,
    make_folds,
    mesh_averaged_scores,
    pr_auc,
    roc_auc,
)
