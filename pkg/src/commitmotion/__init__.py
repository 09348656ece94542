"""Commitment-based player motion models, team influence/dominance fields and pass clustering."""

from ._accel import BACKEND
from .geometry import PlayerState, RelativeLocation, TrackingSample, derive_kinematics, relative_location
from .grid import FieldGrid, GridSpec, Pitch
from .kde import CommitmentModel, KdeModel, commitment_probability, density, fit_commitment_model, fit_kde

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CommitmentModel",
    "FieldGrid",
    "GridSpec",
    "KdeModel",
    "Pitch",
    "PlayerState",
    "RelativeLocation",
    "TrackingSample",
    "commitment_probability",
    "density",
    "derive_kinematics",
    "fit_commitment_model",
    "fit_kde",
    "relative_location",
]
