"""Most-probable transition paths of metastable stochastic systems.

The package minimizes the geometric (arc-length parametrized) form of the
large-deviation action over curves connecting metastable states, which yields
both the maximum-likelihood transition path and the quasipotential barrier.
Specializations cover additive and multiplicative Gaussian noise, spatially
extended systems, birth-death jump processes, and averaged slow-fast systems.
"""

from .errors import (
    AssemblyError,
    ConfigError,
    CriticalPointOnPathError,
    DegenerateDiffusionError,
    DegeneratePathError,
    DomainViolationError,
    InnerSolverError,
    InvalidPathError,
    RegistryError,
    SolverError,
    StepOverflowError,
)
from .hamiltonians import (
    GradientCheckReport,
    HamiltonianModel,
    check_gradients,
    make_additive,
    make_general,
    make_multiplicative,
)
from .inner import (
    InnerSolution,
    NewtonConfig,
    solve_additive,
    solve_general,
    solve_inner,
    solve_multiplicative,
)
from .paths import (
    PathGrid,
    arc_length,
    broken_line_path,
    cumulative_arc_length,
    derivative_s,
    linear_path,
    reparametrize,
    second_derivative_s,
)
from .descent import (
    DescentConfig,
    RunResult,
    action_additive_closed_form,
    action_density,
    action_from_inner,
    detect_saddle_index,
    endpoint_relaxation_rates,
    minimize_action,
    physical_time_profile,
)
from .completion import CompletionResult, complete_downhill
from .models import (
    FixedPoint,
    ModelInstance,
    RunSettings,
    available_models,
    find_fixed_points,
    instantiate,
    sample_admissible,
)
from .spde import (
    SplitOperator,
    build_split,
    etd_relaxation_step,
    make_etd_stepper,
    periodic_laplacian,
    zero_mean_projection,
)
from .string_method import StringResult, parallelism_residual, string_relax
from .serialize import RunSpec, read_csv, read_json, write_csv, write_json

__version__ = "0.1.0"
