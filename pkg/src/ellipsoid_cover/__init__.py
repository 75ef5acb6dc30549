"""Homotopy reconstruction of sampled manifolds from tangent-normal ellipsoids."""
from .bounds import (
    coverage_radius,
    density_check,
    density_report,
    lambda_bound,
    lambda_closed_form,
    max_density_ratio,
    thickening_covered,
)
from .certifier import (
    CertificateReport,
    CertifierParams,
    Configuration,
    grid_certify,
    kappa_eff,
    lipschitz_L,
    mandatory,
    point_S,
    point_X,
    v,
)
from .cover import EllipsoidCover
from .errors import *  # noqa: F401,F403
from .geometry import (
    Ellipsoid,
    Membership,
    TangentFrame,
    cone_distance_bound,
    depth_root,
    pep,
    split_components,
)
from .manifolds import AffineSubspace, AnalyticManifold, Circle, Sphere, Torus, parse_model
from .nerve import SimplicialComplex, betti_numbers, build_nerve, intersect
from .retraction import (
    FlowTrace,
    RetractionConfig,
    field_batch,
    flow,
    glued_field,
    local_field,
    partition_of_unity,
    retract,
    set_distances,
    set_membership,
    verify_angle_bound,
    verify_halfline_inequality,
)
from .sampling import SampleFile, generate_sample

__version__ = "0.1.0"
