"""Local times, upcrossings and weak cutpoints of transient birth-death chains.

Built around the potential kernel D(m, n), D(m) of a nearest-neighbor walk on
the nonnegative integers with asymptotically zero drift: exact single-site and
two-site laws, an exact O(n) branching-representation sampler, a truncated
ground-truth path walker, independent verification oracles, and the scaled
exponential limit-law experiment.
"""

__version__ = "0.1.0"

from .analytics import (
    SetKind,
    event_probabilities,
    exit_down,
    exit_up,
    expected_count,
    joint_site_law,
    joint_upcross_law,
    lambda_const,
    limit_ratio_report,
    membership_prob,
    pair_ratio,
    parse_kind,
    site_law,
    upcross_law,
    weak_joint,
    weak_prob,
)
from .branching import (
    CountSummary,
    EnsembleCounts,
    GeometricParam,
    SiteOccupancy,
    geom_param,
    pgf_iterate,
    run_ensemble,
    run_replica,
    step,
)
from .combinatorics import count_padded, count_strict, logsum_kfold
from .environment import (
    DivergentKernelError,
    DriftSpec,
    Environment,
    Finiteness,
    KernelPolicy,
    PotentialKernel,
    classify_finiteness,
    product_asymptotic_report,
)
from .oracle import (
    CrossCheckConfig,
    VerificationReport,
    cross_check_suite,
    enumerate_paths,
    tridiag_exit,
)
from .stats import ReplicaEnsemble, ks_exp1, limit_law_report, sample_moments
from .walker import (
    PathStats,
    WalkerEnsemble,
    horizon_for,
    run_walk,
    walk_ensemble,
    weak_cut_indicator,
)
