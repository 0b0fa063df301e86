"""Orthogonal convolutions built from paraunitary systems."""
from .convops import (
    ConvSpec,
    OrthoReport,
    apply,
    build_orthogonal,
    check_constraints,
    circulant_oracle,
    rko_project,
    svcm_project,
    verify_orthogonality,
)
from .errors import (
    InvalidInputError,
    NonConvergenceError,
    ParafacError,
    PoleError,
    ResourceError,
    SingularityError,
)
from .lipnet import GroupSort, ResidualBlock, empirical_lipschitz, group_sort, margin_and_radius
from .multirate import polyphase_component, polyphase_matrix, upsample
from .ortho import SkewParams, bjorck, cayley, exp_skew, init_scheme
from .paraunitary import ParaunitaryFactors, build_1d, build_2d, init_reduced, random_factors
from .polymat import MatrixSeq, eval_z, is_paraunitary, paraconjugate, seq_mul

__version__ = "0.1.0"
