"""rdsmall: regression discontinuity estimation for small studies.

The package covers the full small-study RD workflow:

* ``core`` — samples, cutoff splits, affine score handling
* ``local_poly`` — boundary local-polynomial fits as linear-in-y weights
* ``bandwidth`` — rule-of-thumb, plug-in (ik) and bounded-curvature (ak)
  bandwidth selection
* ``diss`` — the density-inclusive study size metric, sample and population
* ``inference`` — conventional, robust bias-corrected and fixed-length
  intervals
* ``local_randomization`` — window selection, sharp-null permutation tests,
  interval inversion
* ``simulation`` — the seeded Monte Carlo evaluation harness
* ``cli`` — CSV analysis, study-size reports, simulation runs
"""

from ._version import __version__
from .bandwidth import (
    BandwidthResult,
    CurvatureBound,
    ak_bandwidth,
    ak_plugin_bandwidth,
    estimate_m_hat,
    ik_bandwidth,
    kernel_constant,
    silverman_rot,
    silverman_rot_population,
)
from .core import EffectEstimate, RDSample, SideSplit, affine_transform, validate
from .diss import (
    BetaSpec,
    beta_cdf,
    beta_quantile,
    beta_sigma_star,
    diss_m,
    n_for_target_diss,
    population_diss,
)
from .inference import (
    BiasCorrection,
    FoldedNormalCV,
    cv_interval,
    flci_interval,
    folded_normal_cv,
    rbc_interval,
    worst_case_bias,
)
from .local_poly import (
    Kernel,
    LinearFit,
    late_point_estimate,
    local_poly_fit,
    nn_variance,
    se_of_linear_functional,
)
from .local_randomization import (
    LRWindow,
    PermutationResult,
    lr_interval,
    permutation_test,
    select_window,
)
from .simulation import (
    CellSpec,
    SimCellResult,
    eval_mu,
    generate_dataset,
    max_abs_second_derivative,
    run_cell,
    validate_cell_spec,
    write_cell_outputs,
)

__all__ = [
    "__version__",
    "BandwidthResult",
    "BetaSpec",
    "BiasCorrection",
    "CellSpec",
    "CurvatureBound",
    "EffectEstimate",
    "FoldedNormalCV",
    "Kernel",
    "LinearFit",
    "LRWindow",
    "PermutationResult",
    "RDSample",
    "SideSplit",
    "SimCellResult",
    "affine_transform",
    "ak_bandwidth",
    "ak_plugin_bandwidth",
    "beta_cdf",
    "beta_quantile",
    "beta_sigma_star",
    "cv_interval",
    "diss_m",
    "estimate_m_hat",
    "eval_mu",
    "flci_interval",
    "folded_normal_cv",
    "generate_dataset",
    "ik_bandwidth",
    "kernel_constant",
    "late_point_estimate",
    "local_poly_fit",
    "lr_interval",
    "max_abs_second_derivative",
    "n_for_target_diss",
    "nn_variance",
    "permutation_test",
    "population_diss",
    "rbc_interval",
    "run_cell",
    "se_of_linear_functional",
    "select_window",
    "silverman_rot",
    "silverman_rot_population",
    "validate",
    "validate_cell_spec",
    "worst_case_bias",
    "write_cell_outputs",
]
