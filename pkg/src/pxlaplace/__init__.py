"""Desk-scale toolkit for variable-exponent p(x)-Laplace problems.

Covers the pieces needed to study when distributional and viscosity
readings of -div(|Du|^{p(x)-2} Du) = f agree on a grid: modular and
Luxemburg norms, the strong-form operator with its exponent drift term,
inf- and sup-convolution regularization, a variational solver, weak and
viscosity certification checks, and a p(x)-driven image restoration
flow.  The `pxlaplace` console script exposes the same functionality as
config-driven batch experiments.
"""

from .errors import (
    BlowUpError,
    BoundaryStencilError,
    ConfigError,
    DegenerateGradientError,
    DescentStallError,
    DimensionError,
    FixedPointStallError,
    GridMismatchError,
    GrowthViolationError,
    ImageRangeError,
    InvalidExponentError,
    InvalidTestFunctionError,
    IterationLimitError,
    ParameterError,
    PgmFormatError,
    ToolkitError,
)
from .exponent import (
    ExponentField,
    build_exponent_field,
    choose_q,
    exponent_expression,
    log_holder_constant,
)
from .grid import Grid, GridFunction
from .harness import (
    bump_test_function,
    check_viscosity_supersolution,
    check_weak_supersolution,
    comparison_experiment,
    comparison_shrinking_scan,
    default_battery,
    pipeline_viscosity_to_weak,
)
from .infconv import (
    ArgminJet,
    ConvolutionResult,
    f_lower_envelope,
    inf_convolve,
    jet_from_argmin,
    monotone_family_check,
    semiconcavity_check,
    semiconcavity_constant,
    sup_convolve,
)
from .lebesgue import (
    check_holder_pairing,
    check_modular_norm_relations,
    check_product_lemma,
    luxemburg_norm,
    modular,
    sobolev_norm,
)
from .operators import (
    AnalyticProbe,
    OperatorProbe,
    diffusion_matrix,
    divergence_flux_fd,
    flux_pairing,
    infinity_laplacian,
    log_drift,
    neg_div_flux_field,
    probe_preset,
    strong_operator,
    strong_residual_at_jets,
    weak_residual,
)
from .report import CheckItem, CheckReport
from .restoration import (
    FlowResult,
    ImageGrid,
    build_exponent_from_image,
    clr_energy,
    clr_flux,
    continuity_constant,
    evolve_flow,
    read_pgm,
    write_pgm,
)
from .solver import (
    SolveOutcome,
    discrete_energy,
    discrete_energy_gradient,
    harmonic_extension,
    solve_fixed_point,
    solve_variational,
)
from .sources import SourceSpec, source_preset, validate_growth

__version__ = "0.1.0"
