"""Run summaries and the CSV / SVG artifacts written by the command line."""

import csv
import io
import math
import xml.etree.ElementTree as ET
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import PredictionSample
from .control import PathSpec
from .controllers import CONTROLLERS_BY_KIND
from .metric import Ellipsoid
from .obstacles import Circle, Environment, PointCloud, Segment
from .simulator import RunStatus, TrajectoryLog

TRAJECTORY_COLUMNS = [
    "t",
    "robot_pos_x",
    "robot_pos_y",
    "robot_vel_x",
    "robot_vel_y",
    "gov_pos_x",
    "gov_pos_y",
    "alpha_star",
    "eta",
    "delta",
    "delta_e",
    "dist_q",
    "dist_euclid",
]
BOUNDCHECK_COLUMNS = ["case", "k", "zeta", "c1", "c2", "eta", "delta", "oracle", "ratio"]
PREDICTION_COLUMNS = ["t", "pos_x", "pos_y", "eta_euclid", "eta_directional", "area_euclid", "area_directional"]

# number of zone ellipses and velocity arrows drawn per trajectory
SVG_SNAPSHOTS = 12
RUN_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]


@dataclass(kw_only=True, frozen=True)
class RunReport:
    scenario: str
    controller: str
    status: RunStatus
    completion_time: float | None
    distance: float
    mean_speed: float
    max_speed: float
    min_clearance: float
    min_delta_e: float
    replans: int


def summarize(log: TrajectoryLog) -> RunReport:
    positions = np.array([row.robot_pos for row in log.rows]).reshape(-1, 2)
    if log.final_state is not None:
        positions = np.vstack([positions, log.final_state.robot_pos])
    speeds = np.array([float(np.linalg.norm(row.robot_vel)) for row in log.rows])
    return RunReport(
        scenario=log.scenario,
        controller=str(log.controller),
        status=log.status,
        completion_time=log.end_time if log.status == RunStatus.GOAL_REACHED else None,
        distance=float(np.linalg.norm(np.diff(positions, axis=0), axis=1).sum()),
        mean_speed=float(speeds.mean()) if len(speeds) else 0.0,
        max_speed=float(speeds.max()) if len(speeds) else 0.0,
        min_clearance=min((row.dist_euclid for row in log.rows), default=math.inf),
        min_delta_e=min((row.delta_e for row in log.rows), default=math.inf),
        replans=log.replans,
    )


def _cell(value: float | None, digits: int = 3) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}f}"


def format_reports(reports: Sequence[RunReport]) -> str:
    """Side-by-side text table, one column per run."""
    rows = [
        ("controller", [r.controller for r in reports]),
        ("status", [str(r.status) for r in reports]),
        ("completion time [s]", [_cell(r.completion_time) for r in reports]),
        ("distance [m]", [_cell(r.distance) for r in reports]),
        ("mean speed [m/s]", [_cell(r.mean_speed) for r in reports]),
        ("max speed [m/s]", [_cell(r.max_speed) for r in reports]),
        ("min clearance [m]", [_cell(r.min_clearance) for r in reports]),
        ("min delta_e", [_cell(r.min_delta_e, 6) for r in reports]),
        ("replans", [str(r.replans) for r in reports]),
    ]
    label_width = max(len(label) for label, _ in rows)
    widths = [max(len(values[i]) for _, values in rows) for i in range(len(reports))]
    lines = [f"scenario: {reports[0].scenario}"] if reports else []
    for label, values in rows:
        cells = "  ".join(v.rjust(w) for v, w in zip(values, widths, strict=True))
        lines.append(f"{label.ljust(label_width)}  {cells}")
    return "\n".join(lines) + "\n"


def completion_ratio(sddm: RunReport, euclid: RunReport) -> float | None:
    """SDDM completion time over baseline completion time, when both finished."""
    if sddm.completion_time is None or euclid.completion_time is None:
        return None
    return sddm.completion_time / euclid.completion_time


def _write_rows(path: Path, header: list[str], rows) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, float | np.floating) else v for v in row])
    path.write_text(buffer.getvalue())
    return path


def write_trajectory_csv(log: TrajectoryLog, path: Path) -> Path:
    return _write_rows(
        path,
        TRAJECTORY_COLUMNS,
        (
            [
                row.t,
                *map(float, row.robot_pos),
                *map(float, row.robot_vel),
                *map(float, row.gov_pos),
                row.alpha_star,
                row.eta,
                row.delta,
                row.delta_e,
                row.dist_q,
                row.dist_euclid,
            ]
            for row in log.rows
        ),
    )


def write_boundcheck_csv(rows: Sequence[Sequence[float]], path: Path) -> Path:
    return _write_rows(path, BOUNDCHECK_COLUMNS, rows)


def write_prediction_csv(samples: Sequence[PredictionSample], path: Path) -> Path:
    return _write_rows(
        path,
        PREDICTION_COLUMNS,
        (
            [
                s.t,
                float(s.pos_err[0]),
                float(s.pos_err[1]),
                s.eta_euclid,
                s.eta_directional,
                s.area_euclid,
                s.area_directional,
            ]
            for s in samples
        ),
    )


class SvgCanvas:
    """SVG document in world coordinates with the y axis pointing up."""

    def __init__(self, xmin: float, ymin: float, xmax: float, ymax: float, pixels: float = 800.0):
        width, height = xmax - xmin, ymax - ymin
        scale = pixels / max(width, height)
        self.unit = max(width, height) / 400.0
        self.root = ET.Element(
            "svg",
            xmlns="http://www.w3.org/2000/svg",
            width=f"{width * scale:.0f}",
            height=f"{height * scale:.0f}",
            viewBox=f"{xmin:g} {-ymax:g} {width:g} {height:g}",
        )
        self.layer = ET.SubElement(self.root, "g", transform="scale(1,-1)")

    def add(self, tag: str, **attrs: str) -> ET.Element:
        return ET.SubElement(self.layer, tag, {k.rstrip("_").replace("_", "-"): v for k, v in attrs.items()})

    def polyline(self, points, color: str, width: float = 2.0, dash: str | None = None) -> None:
        coords = " ".join(f"{x:.4f},{y:.4f}" for x, y in points)
        attrs = {"points": coords, "fill": "none", "stroke": color, "stroke_width": f"{width * self.unit:g}"}
        if dash:
            attrs["stroke_dasharray"] = dash
        self.add("polyline", **attrs)

    def ellipse(self, e: Ellipsoid, color: str, opacity: float = 0.15) -> None:
        major, minor, angle = e.semi_axes()
        if not (math.isfinite(major) and major > 0):
            return
        cx, cy = e.center
        self.add(
            "ellipse",
            cx=f"{cx:.4f}",
            cy=f"{cy:.4f}",
            rx=f"{major:.4f}",
            ry=f"{minor:.4f}",
            transform=f"rotate({math.degrees(angle):.3f} {cx:.4f} {cy:.4f})",
            fill=color,
            fill_opacity=f"{opacity:g}",
            stroke=color,
            stroke_width=f"{self.unit:g}",
        )

    def arrow(self, start, vector, color: str) -> None:
        x0, y0 = start
        self.add(
            "line",
            x1=f"{x0:.4f}",
            y1=f"{y0:.4f}",
            x2=f"{x0 + vector[0]:.4f}",
            y2=f"{y0 + vector[1]:.4f}",
            stroke=color,
            stroke_width=f"{1.5 * self.unit:g}",
        )

    def environment(self, env: Environment) -> None:
        b = env.bounds
        self.add(
            "rect",
            x=f"{b.xmin:g}",
            y=f"{b.ymin:g}",
            width=f"{b.width:g}",
            height=f"{b.height:g}",
            fill="none",
            stroke="#999999",
            stroke_width=f"{self.unit:g}",
        )
        for obstacle in env:
            if isinstance(obstacle, Circle):
                self.add(
                    "circle",
                    cx=f"{obstacle.center[0]:g}",
                    cy=f"{obstacle.center[1]:g}",
                    r=f"{obstacle.radius:g}",
                    fill="#555555",
                )
            elif isinstance(obstacle, Segment):
                self.add(
                    "line",
                    x1=f"{obstacle.a[0]:g}",
                    y1=f"{obstacle.a[1]:g}",
                    x2=f"{obstacle.b[0]:g}",
                    y2=f"{obstacle.b[1]:g}",
                    stroke="#000000",
                    stroke_width=f"{3 * self.unit:g}",
                )
            elif isinstance(obstacle, PointCloud):
                for x, y in obstacle.points:
                    self.add("circle", cx=f"{x:g}", cy=f"{y:g}", r=f"{2 * self.unit:g}", fill="#d62728")

    def write(self, path: Path) -> Path:
        tree = ET.ElementTree(self.root)
        ET.indent(tree)
        tree.write(path, encoding="unicode", xml_declaration=False)
        return path


def write_run_svg(
    env: Environment, path_spec: PathSpec | None, logs: Sequence[TrajectoryLog], out: Path
) -> Path:
    """Trajectories over the obstacles with zone ellipses and velocity arrows at decimated rows."""
    b = env.bounds
    canvas = SvgCanvas(b.xmin, b.ymin, b.xmax, b.ymax)
    canvas.environment(env)
    if path_spec is not None:
        canvas.polyline(path_spec.waypoints, "#000000", 1.0, dash="0.2,0.2")
    for color, log in zip(RUN_COLORS, logs, strict=False):
        if not log.rows:
            continue
        canvas.polyline([row.gov_pos for row in log.rows], color, 1.0, dash="0.1,0.1")
        canvas.polyline([row.robot_pos for row in log.rows], color, 2.0)
        stride = max(1, len(log.rows) // SVG_SNAPSHOTS)
        directional = CONTROLLERS_BY_KIND[log.controller].directional
        for row in log.rows[::stride]:
            if row.zone_level > 0:
                canvas.ellipse(Ellipsoid(center=row.gov_pos, q=row.q, level=row.zone_level), color)
            canvas.arrow(row.robot_pos, row.robot_vel, "#e377c2" if directional else "#ff00ff")
    return canvas.write(out)


def _heat(fraction: float) -> str:
    """Blue at 0 through red at 1."""
    red = int(round(255 * fraction))
    return f"#{red:02x}40{255 - red:02x}"


def write_prediction_svg(samples: Sequence[PredictionSample], c1: float, out: Path) -> Path:
    """Bounding ellipses of both metrics around the governor at the origin, coloured by time."""
    reach = max(
        math.sqrt(max(s.eta_euclid, s.eta_directional) / c1) for s in samples
    ) if samples else 1.0
    reach = max(reach, 1e-3) * 1.1
    canvas = SvgCanvas(-reach, -reach, reach, reach)
    canvas.polyline([s.pos_err for s in samples], "#000000", 1.5)
    last = max(len(samples) - 1, 1)
    for i, s in enumerate(samples):
        color = _heat(i / last)
        canvas.ellipse(Ellipsoid(center=(0.0, 0.0), q=c1 * np.eye(2), level=s.eta_euclid), color, 0.0)
        canvas.ellipse(Ellipsoid(center=(0.0, 0.0), q=s.q_directional, level=s.eta_directional), color, 0.1)
    return canvas.write(out)
