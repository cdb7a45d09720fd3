"""Finite-depth construction of a weight on which the Hilbert transform fails a
weighted weak-type (1,1) bound, with exact and certified verification."""

from .certified import CertifiedValue
from .measure import (
    Construction,
    ConstructionParams,
    PrecisionExhausted,
    SignEntry,
    SignTable,
    StepMeasure,
    build_w0,
    build_weight,
    choose_sign,
    construct,
    density_at,
    mass,
    refine_stage,
)
from .operators import (
    UndefinedAtJump,
    hilbert_pv,
    maximal,
    maximal_oracle,
    pv_quadrature_oracle,
    weighted_maximal,
    weighted_maximal_oracle,
)
from .triadic import (
    TriadicInterval,
    companion_interval,
    middle_third,
    stage_collections,
)

__version__ = "0.1.0"

__all__ = [
    "CertifiedValue",
    "Construction",
    "ConstructionParams",
    "PrecisionExhausted",
    "SignEntry",
    "SignTable",
    "StepMeasure",
    "TriadicInterval",
    "UndefinedAtJump",
    "build_w0",
    "build_weight",
    "choose_sign",
    "companion_interval",
    "construct",
    "density_at",
    "hilbert_pv",
    "mass",
    "maximal",
    "maximal_oracle",
    "middle_third",
    "pv_quadrature_oracle",
    "refine_stage",
    "stage_collections",
    "weighted_maximal",
    "weighted_maximal_oracle",
]
