"""netma: link prediction in multilayer networks by model averaging.

Per-layer inner-product latent space fits (projected gradient descent) are
combined across layers and candidate latent dimensions with weights chosen
by K-fold edge cross-validation on the target layer, solved over the
probability simplex. Auxiliary layers can run in isolated workers that
exchange only prediction matrices, never raw edges.
"""

from .core import (
    DispatchError,
    EdgeFamily,
    IncompleteInputError,
    InvalidInputError,
    LayerData,
    MultilayerDataset,
    NumericalFailure,
    RngStream,
    SolverFailure,
    all_pairs,
    b_prime,
    b_value,
    canonical_edges,
    derive_seed,
    edge_difference,
    mask_edges,
    nll_edge,
)
from .lsm import FitOptions, InitScheme, LsmParams, fit, gradient, nll, predict_means
from .averaging import (
    CandidatePredictions,
    CvProblem,
    FoldAssignment,
    WeightVector,
    build_cv_problem,
    kkt_residual,
    make_folds,
    predict_averaged,
    simplex_project,
    solve_weights,
)
from .pipeline import (
    ExecutionMode,
    TransferMaConfig,
    TransferMaResult,
    WorkerReply,
    dispatch_layer_fit,
    run_transfer_ma,
)
from .simgen import (
    Example,
    GroundTruth,
    SimScenario,
    gen_example1,
    gen_example2,
    gen_example3,
    gen_example4,
    gen_example5,
    generate,
)
from .evaluation import (
    MetricReport,
    WeightDiagnostics,
    fit_fmlsm,
    simp_ma,
    smpe,
    smpr,
    target_only,
    weight_diagnostics,
)

__version__ = "0.1.0"
