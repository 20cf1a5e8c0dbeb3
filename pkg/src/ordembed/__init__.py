"""ordembed: how precisely do triplet comparisons determine a point configuration?

Generate triplet tables, reconstruct configurations from them by hinge-loss
descent, align reconstructions by similarity transforms, verify the 1-D
displacement bound constructively, build AP-free lower-bound instances, and
run the convergence experiments end to end.
"""

__version__ = "0.1.0"

from .geometry import (
    DisplacementReport,
    PointConfig,
    Similarity,
    apply_similarity,
    cheb_fit_1d,
    displacement,
    distance,
    hausdorff_to_cube,
    min_dinf_over_similarities,
    procrustes_align,
)
from .triplets import (
    TripletTable,
    build_table,
    free_motion_radius,
    is_weakly_isotonic,
    min_margin_per_point,
    triplet_margin,
)
from .solver import (
    SolverParams,
    SolveReport,
    hinge_gradient,
    hinge_loss,
    solve_embedding,
    worst_of_restarts,
)
from .interval_bound import (
    DyadicWitness,
    bound_value,
    build_dyadic_witness,
    gap_sequence,
    normalize_pair,
    verify_interval_bound,
)
from .constructions import (
    APFreeInstance,
    AdversarialPair,
    adversarial_pair,
    apfree_set,
    clusters_example,
    is_beta_isosceles,
    isosceles_free_search,
    verify_similarity_resistance,
)
from .experiments import (
    ExperimentConfig,
    SummaryRow,
    TrialRecord,
    bootstrap_ci,
    loglog_slope,
    perturbation_probability,
    repeated_embedding_study,
    run_sweep,
    sample_box_exclusion,
    sample_uniform_cube,
)

__all__ = [name for name in dir() if not name.startswith("_")]
