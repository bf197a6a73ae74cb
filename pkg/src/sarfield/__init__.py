"""Non-stationary Gaussian random fields on regular lattices.

Simulation of replicate ensembles from anisotropic spatial autoregressive
(SAR) models, synthetic parameter-field dataset generation, windowed
maximum-likelihood estimation, and covariance-structure evaluation tools.
"""

__version__ = "0.1.0"

from .errors import (
    DatasetFormatError,
    DegenerateDataError,
    DegeneratePixelError,
    EstimationError,
    FactorizationError,
    InvalidParameterError,
    SarFieldError,
    ShapeMismatchError,
)
from .sar import (
    BOUNDARY_PERIODIC_X,
    BOUNDARY_TRUNCATE,
    PARAM_CHANNELS,
    GridGeometry,
    ParamFields,
    SarSystem,
    Stencil9,
    assemble_sar,
    dispersion_at,
    precision,
    stencil_at,
)
from .simulate import (
    FieldEnsemble,
    replicate_rng,
    simulate_ensemble,
    solve_sar,
    standardize_pixelwise,
)
from .patterns import (
    PARAM_KINDS,
    PARAM_SUPPORTS,
    PATTERN_KINDS,
    ParamFieldDraw,
    ParamPrior,
    PatternConfig,
    PatternSpec,
    draw_param_field,
    evaluate_pattern,
    sample_param_field,
    sample_pattern_spec,
    stack_patterns,
)
from .analytics import (
    CovAnalysisReport,
    MetricsReport,
    TTestResult,
    bessel_k1,
    correlation_row_analysis,
    correlation_rows,
    cov_rmse,
    paired_ttest,
    param_metrics,
    sample_anchors,
    ssim,
    whittle_correlation,
)
from .mle import (
    MleFit,
    SlidingWindowResult,
    WindowSpec,
    fit_window,
    gmrf_loglik,
    reflect_pad,
    sliding_window_estimate,
)
from .dataset import (
    DatasetConfig,
    DatasetSample,
    generate_sample,
    read_dataset,
    regenerate_sample,
    split_assignments,
    write_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")]
