"""Monte Carlo toolkit for polaron-type path measures.

Brownian motion reweighted by a translation-invariant pair potential is
represented through a Poisson process of time intervals; clusters of
overlapping intervals are busy periods of an M/G/infinity queue.  The
package samples those clusters, computes their Gaussian weights exactly,
solves the exponential tilting equation for the free energy, builds the
stationary infinite-volume process, and runs the numerical verification
suites for the central limit behaviour of the rescaled path.
"""

from .estimates import Estimate
from .potentials import (
    Potential,
    from_config,
    make_bounded_exponential,
    make_constant_v,
    make_frohlich,
    make_nelson,
    make_trivial,
    shift_by_g,
    w_beta_sup,
)
from .cluster_process import (
    Cluster,
    Configuration,
    Cycle,
    expected_cycle_length,
    intensity_mass,
    restrict,
    sample_busy_cycle,
    sample_poisson_configuration,
)
from .gaussian_engine import (
    estimate_F,
    gaussian_quadratic_expectation,
    overlap_covariance,
    sample_path_given_cluster,
    second_moment_under_P_xi,
)
from .renewal import (
    RenewalGrid,
    dormancy_probability_curve,
    sample_stationary_window,
    solve_renewal_equation,
)
from .tilting import (
    ConditionGError,
    TiltedLaw,
    estimate_big_lambda,
    estimate_psi_direct,
    limit_constant,
    pgf_customer_count,
    sample_tilted_cycle,
    solve_lambda,
)
from .stationary_clt import (
    estimate_sigma,
    fclt_test,
    psi_identities_check,
    sample_infinite_volume_window,
)
from .diagnostics import (
    correlation_inequality_suite,
    dormancy_under_gibbs,
    gc_scan,
    sandwich_suite,
)

__version__ = "0.1.0"
