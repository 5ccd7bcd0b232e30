from .base import BaseObstacle, Proximity
from .circle import Circle, dist_q_circle
from .cloud import PointCloud, dist_q_point
from .collection import Environment, Workspace, dist_q_env, free_space_contains, raycast
from .segment import Segment, dist_q_segment

__all__ = [
    "BaseObstacle",
    "Circle",
    "Environment",
    "PointCloud",
    "Proximity",
    "Segment",
    "Workspace",
    "dist_q_circle",
    "dist_q_env",
    "dist_q_point",
    "dist_q_segment",
    "free_space_contains",
    "raycast",
]
