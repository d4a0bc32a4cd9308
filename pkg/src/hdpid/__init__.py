"""Online tuning and compensation of matrix-gain PID controllers.

The package solves the two-stage eigenvalue problems that pick the gain
matrices of a velocity-form MIMO PID law, certifies the resulting error
dynamics with Lyapunov invariant-set bounds and simulates the closed loop on
a fixed-wing kinematic model.
"""

from hdpid.controller import GainSet
from hdpid.lmi import LmiProblem, LmiSolution, Status, solve
from hdpid.plant import AircraftPlant, DisturbanceSampler, PlantModel

__all__ = [
    "AircraftPlant",
    "DisturbanceSampler",
    "GainSet",
    "LmiProblem",
    "LmiSolution",
    "PlantModel",
    "Status",
    "solve",
]

__version__ = "0.1.0"
