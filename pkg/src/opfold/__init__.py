"""opfold: operator-adaptive linear calibration for spectral data.

Strict-linear preprocessing operators (Savitzky-Golay smoothers and
derivatives, detrending projections, finite differences) are screened
inside the calibration itself: PLS through the cross-covariance, Ridge
through operator-induced kernels, and operator chains through a cheap
adjoint-only score.  The deployed object is always a single coefficient
vector on the original wavelength grid.
"""

from .aom_pls import (
    AomPlsConfig,
    ClassifierFit,
    SelectionTable,
    fit_aom_pls,
    fit_aom_plsda,
    predict_labels,
    screen_bank,
    select_global,
)
from .aom_ridge import (
    AomRidgeConfig,
    RidgeFit,
    dual_solve,
    fit_aom_ridge,
    mixture_kernel,
    operator_kernel,
    predict_ridge,
    ridge_coefficients,
)
from .errors import ConfigError, DataError, NumericError, OpfoldError
from .fastaom import (
    ChainCandidate,
    FastAomConfig,
    FastAomFit,
    chain_score,
    enumerate_chains,
    fit_fastaom,
    nnls,
    predict_fastaom,
    truncated_svd,
)
from .model_io import Model, load_model, save_model
from .operators import (
    LinOp,
    OperatorBank,
    OperatorSpec,
    apply_adjoint,
    apply_forward,
    apply_rows,
    build_operator,
    compact_bank,
    compose,
    format_spec,
    materialise,
    parse_spec,
)
from .oracle import EquivalenceReport, equivalence_suite, reference_pls, reference_ridge
from .pls_engine import (
    CenteredData,
    CrossCov,
    PlsFit,
    center,
    cross_covariance,
    nipals_adjoint_extract,
    predict,
    recover_coefficients,
    simpls_extract,
)
from .selection_stats import (
    FoldPlan,
    PairedSummary,
    balanced_accuracy,
    holm_adjust,
    kfold_plan,
    paired_summary,
    rmsep,
    spxy_split,
    vertex_check,
    winner_bias,
)

__version__ = "0.1.0"
