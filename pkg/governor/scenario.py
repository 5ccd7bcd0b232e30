"""
Scenario files.

A scenario is a line-oriented text file of `[section]` headers followed by
`key = value` lines. Values are numbers, `true`/`false`, bare words, or
comma-separated number lists. Keys listed in REPEATED may appear any number of
times and collect into a list. Lines whose first non-blank character is `#`
or `;` are comments. See docs/scenario-format.md for the full grammar.
"""

import logging
import math
import re
from collections.abc import Iterator
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .control import BoundMode, ControllerParams, PathSpec, RobotGovernorState
from .controllers import Controller
from .errors import GovernorError, ScenarioError
from .obstacles import BaseObstacle, Circle, Environment, PointCloud, Segment, Workspace
from .planner import MappingConfig
from .simulator import DEFAULT_DT, DEFAULT_T_MAX, Scenario

logger = logging.getLogger(__name__)

REPEATED = frozenset({"circle", "segment", "point", "waypoint", "row"})
SCATTER_ATTEMPTS = 1000

_SECTION = re.compile(r"^\[([a-z_]+)\]$")
_ENTRY = re.compile(r"^([a-z_][a-z0-9_]*)\s*=\s*(.*)$")
_INT = re.compile(r"^[+-]?\d+$")


def _vector(n: int) -> dict[str, Any]:
    return {"type": "array", "items": {"type": "number"}, "minItems": n, "maxItems": n}


def _section(properties: dict[str, Any], required: list[str] | None = None) -> dict[str, Any]:
    return {
        "type": "object",
        "properties": properties,
        "required": required or [],
        "additionalProperties": False,
    }


POSITIVE = {"type": "number", "exclusiveMinimum": 0}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "scenario": _section(
            {
                "name": {"type": "string"},
                "controller": {"enum": [c.value for c in Controller]},
                "dt": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.05},
                "t_max": POSITIVE,
                "seed": {"type": "integer", "minimum": 0},
                "bound": {"enum": [m.value for m in BoundMode]},
                "static_governor": {"type": "boolean"},
                "allow_unsafe": {"type": "boolean"},
            }
        ),
        "workspace": _section({"bounds": _vector(4)}, ["bounds"]),
        "obstacles": _section(
            {
                "circle": {"type": "array", "items": _vector(3)},
                "segment": {"type": "array", "items": _vector(4)},
                "point": {"type": "array", "items": _vector(2)},
            }
        ),
        "maze": _section(
            {
                "cell": POSITIVE,
                "origin": _vector(2),
                "row": {
                    "type": "array",
                    "items": {"type": "string", "pattern": "^[#.]+$"},
                    "minItems": 1,
                },
            },
            ["cell", "row"],
        ),
        "scatter": _section(
            {
                "count": {"type": "integer", "minimum": 1},
                "radius_min": POSITIVE,
                "radius_max": POSITIVE,
                "clearance": {"type": "number", "minimum": 0},
            },
            ["count", "radius_min", "radius_max"],
        ),
        "path": _section(
            {"waypoint": {"type": "array", "items": _vector(2), "minItems": 2}}, ["waypoint"]
        ),
        "robot": _section({"position": _vector(2), "velocity": _vector(2), "governor": _vector(2)}),
        "gains": _section({"k": POSITIVE, "zeta": POSITIVE, "kg": POSITIVE, "c1": POSITIVE, "c2": POSITIVE}),
        "mapping": _section(
            {
                "goal": _vector(2),
                "beams": {"type": "integer", "minimum": 1},
                "max_range": POSITIVE,
                "resolution": POSITIVE,
                "margin": {"type": "number", "minimum": 0},
                "scan_period": POSITIVE,
                "replan_period": POSITIVE,
            },
            ["goal"],
        ),
    },
    "required": ["workspace"],
    "additionalProperties": False,
}

VALIDATOR = Draft202012Validator(SCHEMA)


@dataclass
class ScenarioDocument:
    """Parsed sections plus the source line of every section, key and repeated entry."""

    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    lines: dict[tuple, int] = field(default_factory=dict)

    def line_for(self, path: tuple) -> int | None:
        for n in range(len(path), 0, -1):
            if path[:n] in self.lines:
                return self.lines[path[:n]]
        return None

    def get(self, section: str, key: str, default: Any = None) -> Any:
        return self.sections.get(section, {}).get(key, default)


def _parse_value(text: str, line: int) -> Any:
    text = text.strip()
    if not text:
        raise ScenarioError("missing value", line)
    if text in ("true", "false"):
        return text == "true"
    if "," in text:
        return [_parse_number(part.strip(), line) for part in text.split(",")]
    try:
        return _parse_number(text, line)
    except ScenarioError:
        return text


def _parse_number(text: str, line: int) -> int | float:
    if _INT.match(text):
        return int(text)
    try:
        value = float(text)
    except ValueError:
        raise ScenarioError(f"expected a number, got {text!r}", line) from None
    if not math.isfinite(value):
        raise ScenarioError(f"number {text!r} is not finite", line)
    return value


def parse_text(text: str) -> ScenarioDocument:
    doc = ScenarioDocument()
    section: str | None = None
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if match := _SECTION.match(stripped):
            section = match.group(1)
            if section in doc.sections:
                raise ScenarioError(f"section [{section}] appears twice", number)
            doc.sections[section] = {}
            doc.lines[(section,)] = number
            continue
        match = _ENTRY.match(stripped)
        if match is None:
            raise ScenarioError(f"cannot parse {stripped!r}", number)
        if section is None:
            raise ScenarioError("key outside of any section", number)
        key, value = match.group(1), _parse_value(match.group(2), number)
        entries = doc.sections[section]
        if key in REPEATED:
            items = entries.setdefault(key, [])
            doc.lines.setdefault((section, key), number)
            doc.lines[(section, key, len(items))] = number
            items.append(value)
        elif key in entries:
            raise ScenarioError(f"key {key!r} repeated in [{section}]", number)
        else:
            entries[key] = value
            doc.lines[(section, key)] = number
    return doc


def validate(doc: ScenarioDocument) -> None:
    """Check the document against SCHEMA, reporting the most relevant error with its line."""
    error = best_match(VALIDATOR.iter_errors(doc.sections))
    if error is None:
        return
    where = tuple(error.absolute_path)
    if error.validator == "additionalProperties" and isinstance(error.instance, dict):
        unknown = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        if unknown:
            where = (*where, unknown[0])
    location = ".".join(str(p) for p in where) or "document"
    raise ScenarioError(f"{location}: {error.message}", doc.line_for(where))


def maze_walls(rows: list[str], cell: float, origin: tuple[float, float] = (0.0, 0.0)) -> list[Segment]:
    """
    Wall segments between solid ('#') and free ('.') cells of a character grid.

    rows run top to bottom. Space outside the grid counts as solid, so the
    border of the free region is walled. Collinear unit edges are merged.
    """
    height = len(rows)
    width = max(len(r) for r in rows)
    solid = np.ones((height + 2, width + 2), dtype=bool)
    for i, row in enumerate(rows):
        iy = height - i
        for ix, char in enumerate(row):
            solid[iy, ix + 1] = char == "#"
    ox, oy = origin
    walls = []

    def runs(flags: Iterator[bool]) -> Iterator[tuple[int, int]]:
        start = None
        for k, flag in enumerate([*flags, False]):
            if flag and start is None:
                start = k
            elif not flag and start is not None:
                yield start, k
                start = None

    for j in range(height + 1):
        edge = solid[j, 1 : width + 1] != solid[j + 1, 1 : width + 1]
        for a, b in runs(iter(edge)):
            y = oy + j * cell
            walls.append(Segment((ox + a * cell, y), (ox + b * cell, y)))
    for i in range(width + 1):
        edge = solid[1 : height + 1, i] != solid[1 : height + 1, i + 1]
        for a, b in runs(iter(edge)):
            x = ox + i * cell
            walls.append(Segment((x, oy + a * cell), (x, oy + b * cell)))
    return walls


def scatter_circles(
    rng: np.random.Generator,
    bounds: Workspace,
    path: PathSpec,
    count: int,
    radius_min: float,
    radius_max: float,
    clearance: float = 0.5,
    keep_out: list[np.ndarray] | None = None,
) -> list[Circle]:
    """Random circles that keep clearance from the path, the keep-out points and each other."""
    if radius_max < radius_min:
        raise ScenarioError(f"radius_max={radius_max} is below radius_min={radius_min}")
    placed: list[Circle] = []
    points = path.waypoints
    for _ in range(count * SCATTER_ATTEMPTS):
        if len(placed) == count:
            break
        r = float(rng.uniform(radius_min, radius_max))
        c = np.array(
            [
                rng.uniform(bounds.xmin + r, bounds.xmax - r),
                rng.uniform(bounds.ymin + r, bounds.ymax - r),
            ]
        )
        circle = Circle(c, r)
        gap = min(
            Segment(a, b).dist_q(np.eye(2), c).dist for a, b in zip(points[:-1], points[1:], strict=True)
        )
        if gap < r + clearance:
            continue
        if any(np.linalg.norm(c - p) < r + clearance for p in keep_out or []):
            continue
        if any(np.linalg.norm(c - o.center) < r + o.radius + clearance for o in placed):
            continue
        placed.append(circle)
    if len(placed) < count:
        raise ScenarioError(f"placed only {len(placed)} of {count} circles")
    return placed


def build(doc: ScenarioDocument, name: str = "scenario", seed: int | None = None) -> Scenario:
    """Turn a validated document into a Scenario; seed overrides the document's own."""

    def fail(section: str, exc: GovernorError) -> ScenarioError:
        return ScenarioError(exc.message, doc.line_for((section,)))

    head = doc.sections.get("scenario", {})
    seed = int(head.get("seed", 0)) if seed is None else seed
    xmin, ymin, xmax, ymax = doc.get("workspace", "bounds")
    try:
        bounds = Workspace(xmin=xmin, ymin=ymin, xmax=xmax, ymax=ymax)
    except GovernorError as exc:
        raise fail("workspace", exc) from exc

    obstacles: list[BaseObstacle] = []
    try:
        obstacles.extend(Circle(v[:2], v[2]) for v in doc.get("obstacles", "circle", []))
        obstacles.extend(Segment(v[:2], v[2:]) for v in doc.get("obstacles", "segment", []))
        if points := doc.get("obstacles", "point", []):
            obstacles.append(PointCloud(points))
    except GovernorError as exc:
        raise fail("obstacles", exc) from exc
    if "maze" in doc.sections:
        maze = doc.sections["maze"]
        obstacles.extend(maze_walls(maze["row"], float(maze["cell"]), tuple(maze.get("origin", (0.0, 0.0)))))

    path = None
    if "path" in doc.sections:
        try:
            path = PathSpec(waypoints=np.array(doc.get("path", "waypoint"), dtype=np.float64))
        except GovernorError as exc:
            raise fail("path", exc) from exc

    mapping = goal = None
    if "mapping" in doc.sections:
        options = {k: v for k, v in doc.sections["mapping"].items() if k != "goal"}
        try:
            mapping = MappingConfig(**options)
        except GovernorError as exc:
            raise fail("mapping", exc) from exc
        goal = doc.get("mapping", "goal")

    robot = doc.sections.get("robot", {})
    position = robot.get("position")
    if position is None:
        if path is None:
            raise ScenarioError("[robot] position is required without a [path]", doc.line_for(("robot",)))
        position = path.start.tolist()
    initial = RobotGovernorState(
        robot_pos=position,
        robot_vel=robot.get("velocity", (0.0, 0.0)),
        gov_pos=robot.get("governor", position),
    )

    if "scatter" in doc.sections:
        if path is None:
            raise ScenarioError("[scatter] needs a [path] to keep clear", doc.line_for(("scatter",)))
        scatter = doc.sections["scatter"]
        obstacles.extend(
            scatter_circles(
                np.random.default_rng(seed),
                bounds,
                path,
                scatter["count"],
                scatter["radius_min"],
                scatter["radius_max"],
                scatter.get("clearance", 0.5),
                keep_out=[initial.robot_pos, initial.gov_pos],
            )
        )

    try:
        return Scenario(
            env=Environment(*obstacles, bounds=bounds),
            initial=initial,
            path=path,
            goal=goal,
            params=ControllerParams(**doc.sections.get("gains", {})),
            dt=head.get("dt", DEFAULT_DT),
            t_max=head.get("t_max", DEFAULT_T_MAX),
            controller=Controller(head.get("controller", Controller.SDDM)),
            bound_mode=BoundMode(head.get("bound", BoundMode.EXACT)),
            mapping=mapping,
            static_governor=head.get("static_governor", False),
            allow_unsafe=head.get("allow_unsafe", False),
            seed=seed,
            name=head.get("name", name),
        )
    except GovernorError as exc:
        raise fail("scenario", exc) from exc


def loads(text: str, name: str = "scenario", seed: int | None = None) -> Scenario:
    doc = parse_text(text)
    validate(doc)
    return build(doc, name, seed)


def load(path: Path | str, seed: int | None = None) -> Scenario:
    source = Path(path)
    try:
        text = source.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {source}: {exc.strerror}") from exc
    scenario = loads(text, source.stem, seed)
    logger.info("loaded scenario=%s obstacles=%d", scenario.name, len(scenario.env))
    return scenario


def bundled(name: str, seed: int | None = None) -> Scenario:
    """One of the scenarios shipped with the package, by stem (e.g. "corridor")."""
    resource = resources.files("governor") / "scenarios" / f"{name}.scenario"
    if not resource.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return loads(resource.read_text(), name, seed)


def bundled_names() -> list[str]:
    folder = resources.files("governor") / "scenarios"
    return sorted(p.name.removesuffix(".scenario") for p in folder.iterdir() if p.name.endswith(".scenario"))
