from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum

from .control import (
    BoundMode,
    ControllerParams,
    RobotGovernorState,
    SafetyAssessment,
    assess,
    baseline_energy_zone,
)
from .obstacles import Environment

AssessFn = Callable[[RobotGovernorState, Environment, ControllerParams, BoundMode], SafetyAssessment]


class Controller(StrEnum):
    SDDM = "sddm"
    EUCLID = "euclid"


@dataclass(frozen=True, kw_only=True)
class ControllerGroup:
    kind: Controller
    label: str
    assess: AssessFn
    directional: bool


CONTROLLER_GROUPS: list[ControllerGroup] = [
    ControllerGroup(
        kind=Controller.SDDM,
        label="directional metric",
        assess=assess,
        directional=True,
    ),
    ControllerGroup(
        kind=Controller.EUCLID,
        label="euclidean energy",
        assess=baseline_energy_zone,
        directional=False,
    ),
]

CONTROLLERS_BY_KIND = {group.kind: group for group in CONTROLLER_GROUPS}
