"""Sliding-paraboloid laboratory: envelopes, contact sets and measure-decay
iterations for supersolutions of Pucci extremal equations on grids."""

from slidelab.geometry import (
    ContactSet,
    GridDomain,
    GridFunction,
    Paraboloid,
    eval_paraboloid,
    make_ball_domain,
    measure,
)
from slidelab.pucci import (
    PucciParams,
    SupersolutionReport,
    SymMatrix,
    check_supersolution,
    discrete_hessian,
    pucci_minus,
    pucci_plus,
)
from slidelab.envelope import (
    EnvelopeResult,
    ThetaField,
    a_envelope,
    contact_set,
    convex_envelope,
    inf_convolution,
    theta,
)
from slidelab.sliding import (
    MeasureReport,
    SlideResult,
    measure_estimate,
    slide_up,
    tangent_paraboloids,
)
from slidelab.experiments import (
    ExperimentConfig,
    run_global_decay,
    run_interior_decay,
    run_weak_harnack,
    sweep_lambda,
)

__all__ = [
    "ContactSet", "GridDomain", "GridFunction", "Paraboloid", "eval_paraboloid",
    "make_ball_domain", "measure",
    "PucciParams", "SupersolutionReport", "SymMatrix", "check_supersolution",
    "discrete_hessian", "pucci_minus", "pucci_plus",
    "EnvelopeResult", "ThetaField", "a_envelope", "contact_set", "convex_envelope",
    "inf_convolution", "theta",
    "MeasureReport", "SlideResult", "measure_estimate", "slide_up", "tangent_paraboloids",
    "ExperimentConfig", "run_global_decay", "run_interior_decay", "run_weak_harnack",
    "sweep_lambda",
]

__version__ = "0.1.0"
