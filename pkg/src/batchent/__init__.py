"""batchent: batch active learning for perceptual embeddings trained on
relative (triplet) comparisons.

Each round, the model's uncertainty about every unannotated triplet's margin
is sampled with shared dropout masks; the batch whose margin distribution has
maximal joint entropy is chosen by greedy orthogonal-residual selection and
sent for annotation; the embedding is then retrained warm from the grown
labeled set.
"""

from .data import (
    DissimMatrix,
    FeatureTable,
    SyntheticSpec,
    Triplet,
    TripletDataset,
    TripletList,
    generate_synthetic,
    make_synthetic_dataset,
    triplets_from_matrix,
)
from .diagnostics import inverse_normal_cdf, margin_histogram, qq_against_normal
from .linalg import OrthoBasis, Saturated, basis_extend, cholesky_logdet, gram_logdet_by_residuals, mgs_residual
from .loop import (
    ActiveLearningSession,
    ExperimentConfig,
    Oracle,
    RoundRecord,
    RoundSettings,
    commit_round,
    init_session,
    propose_batch,
    run_experiment,
    run_round,
)
from .model import (
    AdamState,
    DropoutPlan,
    EmbeddingParams,
    TrainConfig,
    batch_loss_and_grad,
    embed,
    evaluate,
    init_adam,
    init_params,
    make_dropout_plan,
    margins,
    retrieve,
    train,
)
from .posterior import CenteredMargins, MarginSampleMatrix, center, sample_margins
from .strategies import (
    SelectionConfig,
    SelectionResult,
    batch_entropy,
    greedy_residual_selection,
    select_joint_entropy,
    select_random,
    select_uncertainty,
    select_variance,
)

__version__ = "0.1.0"
