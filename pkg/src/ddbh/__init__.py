"""Photonic currents in driven-dissipative Bose-Hubbard resonator lattices.

Five solver tiers share one scenario description (:mod:`ddbh.model`):

* :mod:`ddbh.linear_steady`: exact non-interacting steady states,
* :mod:`ddbh.meanfield_gp`: nonlinear coherent-field dynamics,
* :mod:`ddbh.fluctuations`: quadratic fluctuations and branch stability,
* :mod:`ddbh.single_cavity`: exact driven Kerr cavity and its lattice embedding,
* :mod:`ddbh.gutzwiller`: site-factorized density-matrix dynamics.
"""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import DDBHError, ScenarioError, SolverError
from .model import (Gradient, LatticeSpec, ModelParams, PhaseImprint, ScenarioConfig, SourceDrain,
                    build_scenario, load_scenario, validate)
from .states import CoherentField, GutzwillerState

__all__ = [
    "CoherentField", "DDBHError", "Gradient", "GutzwillerState", "LatticeSpec", "ModelParams",
    "PhaseImprint", "ScenarioConfig", "ScenarioError", "SolverError", "SourceDrain",
    "build_scenario", "load_scenario", "validate", "__version__",
]
