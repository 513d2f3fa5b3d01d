"""Matrix-free proximal splitting with epigraphically relaxed, Moreau-enhanced
multilayer regularizers, plus the synthetic recovery experiments built on it."""

from . import linops, models, prox, solver, tasks
from ._kernels import backend
from .models import ModelSpec, ReferenceData, VariantConfig, build_model
from .solver import SolverConfig, SolverDivergenceError, solve

__version__ = "0.1.0"

__all__ = [
    "ModelSpec",
    "ReferenceData",
    "SolverConfig",
    "SolverDivergenceError",
    "VariantConfig",
    "backend",
    "build_model",
    "linops",
    "models",
    "prox",
    "solve",
    "solver",
    "tasks",
]
