"""Certified construction of a rank-one perturbation of a diagonal unitary.

The package builds, step by step, the angle sequences and coefficient
vectors defining finite truncations T_n = D_n + b (x) a of a perturbed
diagonal unitary whose point spectrum consists of distinct roots of unity,
certifies every inequality the construction relies on with outward-rounded
interval arithmetic, and exposes the truncations for orbit and spectral
exploration.
"""

from .exactcircle import (
    Angle,
    CertComplex,
    CertScalar,
    PrecisionExhausted,
    Verdict,
    angle_normalize,
    cert_le,
    cert_lt,
    chord,
    parse_angle,
    refine,
    unit_value,
)
from .cauchy import CauchyNodes, CertMatrix, NodeCollision
from .induction import (
    BadSeed,
    ConstructionState,
    PrecisionPolicy,
    SearchExhausted,
    StepData,
    construct,
    extend,
    j_of,
    step_one,
)
from .certify import Certificate, Check, EmptyWindow, full_certificate
from .dynamics import (
    DepthExceeded,
    OperatorTruncation,
    OrbitTrace,
    OracleFailure,
    assemble,
    brute_spectrum,
    eigen_residual,
    orbit,
    root_of_unity_order,
)

__version__ = "0.1.0"
