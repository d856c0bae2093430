"""Local constant generalized quantile regression with simultaneous
confidence corridors.

The package estimates conditional quantile, expectile, and mean surfaces
by kernel-weighted M-estimation and builds simultaneous confidence
corridors around them, either from an extreme-value limit or from a
smoothed bootstrap.  A Monte Carlo harness reproduces coverage tables,
and a comparison tool contrasts two samples' conditional quantile
surfaces.
"""

__version__ = "0.1.0"

from .asymptotic import (
    Corridor,
    asymptotic_cc,
    c_alpha,
    corridor_volume,
    covers,
    critical_constants,
    d_n_centering,
    gumbel_cdf,
)
from .bandwidth import (
    BandwidthPlan,
    canonical_bandwidth_factor,
    estimation_bandwidth,
    make_plan,
    nuisance_bandwidths,
    rule_of_thumb,
    undersmooth_factor,
    yu_jones_factor,
)
from .bootstrap import BootstrapConfig, bootstrap_cc
from .compare import (
    GroupComparison,
    common_grid,
    compare_groups,
    group_corridor,
    response_ks,
)
from .config import RunConfig, build_run_config, load_config_file
from .errors import (
    ConfigError,
    DataError,
    EmptyNeighborhoodError,
    GqrError,
    NumericalError,
)
from .estimator import (
    Dataset,
    FitSurface,
    GridSpec,
    default_grid,
    fit_point,
    fit_surface,
    residuals,
)
from .io import format_number, read_dataset, write_csv, write_metadata, write_text
from .kernels import (
    GAUSSIAN,
    KernelConstants,
    ProductKernel,
    QUARTIC,
    convolve_kernels,
    get_kernel,
    kernel_constants,
)
from .losses import TaskSpec, psi, rho, sigma_sq_theoretical
from .nuisance import NuisanceFit, fit_nuisance, pilot_residuals
from .simulate import (
    CALIBRATED_BANDWIDTHS,
    CellSpec,
    DGPSpec,
    coverage_study,
    draw_dataset,
    gaussian_field_sup,
    run_cell,
    std_normal_expectile,
    true_surface,
)
