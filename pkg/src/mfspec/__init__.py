"""Multifractal spectra of observables on symbolic dynamical systems.

The package computes entropy and dimension spectra of level sets of
normalized observable sequences through the large-deviations route: finite
depth pressure and log-moment generating curves, discrete Legendre
conjugation into rate functions, and spectrum assembly, cross-checked by
closed forms, a transfer-operator oracle, direct covering counts, and
exponentially tilted Monte Carlo.
"""

from .convex import (
    DomainEndpoints,
    GridFunction,
    SubgradientInterval,
    UniformGrid,
    conjugate_value_at,
    domain_endpoints,
    fenchel_gap,
    kink_scan,
    legendre_conjugate,
    subgradient,
)
from .errors import BudgetExceededError, ConfigError
from .ldp import (
    SmoothnessReport,
    TailEstimate,
    TiltedSampler,
    binomial_range_probability,
    binomial_tail_oracle,
    build_tilted_sampler,
    gartner_ellis_check,
    sample_plain,
    sample_tilted,
)
from .observables import (
    AlternatingWeights,
    ConstantWeights,
    CylinderValue,
    LocallyConstantBirkhoff,
    MarkovLocalEntropy,
    MatrixCocycle,
    TableWeights,
    WeightedBirkhoff,
    almost_additivity_defect,
    eval_on_cylinder,
    is_additive,
    is_almost_additive,
    variation,
)
from .pressure import (
    DEFAULT_DEPTHS,
    DEFAULT_Q_GRID,
    ExtrapolationResult,
    PressureCurve,
    cocycle_pressure_at,
    extrapolate_limit,
    log_mgf_at,
    mgf_curve,
    pressure_at,
    pressure_curve,
    transfer_pressure,
    value_table,
)
from .spectra import (
    CoveringEstimate,
    SpectrumTable,
    besicovitch_oracle,
    binary_entropy,
    covering_entropy_estimate,
    entropy_spectrum,
    hausdorff_from_entropy,
    ratio_spectrum,
)
from .symbolic import (
    DEFAULT_BUDGET,
    AhlforsBowenReport,
    ReferenceMeasure,
    ShiftSpace,
    Word,
    bowen_ball_word_length,
    cylinder_measure,
    enumerate_words,
    verify_ahlfors_bowen,
)

__version__ = "0.1.0"
