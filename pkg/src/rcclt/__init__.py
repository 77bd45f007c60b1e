"""Random-conductance walk laboratory.

Solves regularized correctors on periodized media, simulates the
continuous-time walk with its martingale decomposition, evaluates exact
torus spectra, and packages the decay-rate experiments behind a
reproducible CLI.
"""

__version__ = "0.1.0"

from .corrector import (
    Chi1D,
    CorrectorField,
    chi_1d,
    d_mu_field,
    sigma_mu_sq,
    solve_corrector,
    v_1d,
    v_mu_field,
    w_mu_field,
)
from .environments import (
    Constant,
    Environment,
    EnvironmentSpec,
    FieldScalar,
    Site,
    TwoPoint,
    Uniform,
    conductance,
    drift_field,
    generate_environment,
    load_environment,
    parse_distribution,
    save_environment,
    translate,
)
from .experiments import (
    ExperimentReport,
    RateFit,
    chi_tail_experiment,
    clt_experiment,
    estimate_V_J,
    ks_distance,
    phi_moment_experiment,
    rate_fit,
    sigma_convergence_experiment,
    spatial_average_variance,
)
from .spectral import (
    GeneratorMatrix,
    SpectralMeasure,
    build_generator,
    phi_second_moment_exact,
    remainder_second_moment_exact,
    semigroup_evolve,
    spectral_measure,
    variance_decay_curve,
)
from .stats import normal_cdf
from .walks import (
    McConfig,
    McResult,
    MartingaleSample,
    Trajectory,
    accumulate_martingale,
    accumulate_martingale_1d,
    run_monte_carlo,
    simulate_trajectory,
    simulate_trajectory_1d,
    walk_stream,
)
