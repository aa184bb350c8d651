"""Differentially private and fair logistic regression via perturbation of the
objective's polynomial coefficients."""

__version__ = "0.1.0"

from .dataset import (
    EncodedDataset,
    ParseError,
    RawTable,
    Schema,
    ColumnSpec,
    build_dataset,
    encode,
    fetch_dataset,
    load_csv,
    normalize,
    split,
)
from .evaluation import (
    ExperimentConfig,
    ExperimentReport,
    accuracy,
    predict,
    risk_difference,
    run_experiment,
)
from .mechanisms import (
    MonomialPartition,
    NoiseDistribution,
    PrivacySpec,
    SplitBudget,
    compose_split_delta,
    compose_split_epsilon,
    gaussian_sample,
    gaussian_sigma,
    l1_sensitivity_fair,
    l1_sensitivity_lr,
    l2_sensitivity_fair,
    l2_sensitivity_lr,
    laplace_sample,
    partition_monomials,
    perturb,
)
from .optimizer import (
    QuadraticForm,
    RegularizationPolicy,
    canonicalize,
    minimize_logistic_exact,
    minimize_quadratic,
)
from .polynomial import (
    FairnessVector,
    PolyObjective,
    eval_poly,
    fair_poly,
    fairness_vector,
    gradient_poly,
    lr_poly,
)
from .trainers import (
    TrainedModel,
    train_adfc,
    train_fair_lr,
    train_fm,
    train_lr,
    train_pdfc,
    train_relaxed_fm,
)
