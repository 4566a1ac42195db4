"""Hand-landmark graph preprocessing and a residual GCN gesture classifier."""

from .dataset_io import (
    CLASS_NAMES,
    VOCABULARY,
    ClassVocabulary,
    read_graphs,
    read_landmarks,
    synth_dataset,
    write_graphs,
    write_landmarks,
)
from .evaluation import (
    ConfusionMatrix,
    MetricsReport,
    classification_metrics,
    confusion_matrix,
    cross_validate,
    roc_auc_ovr,
    stratified_kfold,
)
from .gcn_net import (
    ModelConfig,
    ModelParams,
    batch_norm,
    gcn_layer_forward,
    init_params,
    model_backward,
    model_forward,
    nll_loss,
    node_edge_dropout,
    normalized_adjacency,
    parameter_count,
)
from .hand_graph import (
    HAND_EDGES,
    HAND_TOPOLOGY,
    HandPose,
    HandTopology,
    Landmark,
    PoseGraph,
    build_adjacency,
    compute_joint_angles,
    joint_angle,
    preprocess,
    scale_normalize,
    translational_normalize,
)
from .numerics import (
    RngStream,
    finite_diff_grad,
    leaky_relu,
    log_softmax,
    matmul,
    xavier_uniform,
)
from .training import (
    AdamState,
    Checkpoint,
    TrainConfig,
    adam_step,
    fit,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"
