"""Stay, trip, and mobility-metric inference from raw mobile location records.

Five composable stages — trace segmentation clustering, incremental
clustering, stay duration calculation, oscillation correction, and stay
integration — assembled into deterministic, profiled workflows.
"""

from .kernels import BACKEND
from .model import (ChangePoints, DayTrajectory, LabeledRecord,
                    LocationRecord, Stay, StaySource, haversine_km)
from .pipeline import (StageKind, StageSpec, WorkflowSpec, build_preset,
                       compare_workflows, execute_workflow, parse_workflow,
                       scaling_probe, validate_workflow)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ChangePoints",
    "DayTrajectory",
    "LabeledRecord",
    "LocationRecord",
    "Stay",
    "StaySource",
    "StageKind",
    "StageSpec",
    "WorkflowSpec",
    "build_preset",
    "compare_workflows",
    "execute_workflow",
    "haversine_km",
    "parse_workflow",
    "scaling_probe",
    "validate_workflow",
    "__version__",
]
