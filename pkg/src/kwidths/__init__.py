"""Certified lower bounds and optimized upper bounds for Kolmogorov widths in l_q^N."""
from .certify import Certificate, certify_ensemble, certify_pair, certify_set, theorem2_bound
from .ensembles import EXACT, CoupledPair, DiscreteEnsemble, Flags, GroupSpec, Sample, orbit_ensemble
from .errors import WidthsError
from .vecspace import MixedNormSpec, Subspace, distance_lq, lq_norm, mixed_norm
from .widths import WidthEstimate, best_subspace_l2, best_subspace_lq, gap_report, sup_width_upper

__version__ = "0.1.0"

__all__ = [
    "Certificate", "certify_ensemble", "certify_pair", "certify_set", "theorem2_bound",
    "EXACT", "CoupledPair", "DiscreteEnsemble", "Flags", "GroupSpec", "Sample", "orbit_ensemble",
    "WidthsError", "MixedNormSpec", "Subspace", "distance_lq", "lq_norm", "mixed_norm",
    "WidthEstimate", "best_subspace_l2", "best_subspace_lq", "gap_report", "sup_width_upper",
]
