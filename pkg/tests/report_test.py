import csv
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from governor import report, scenario as scenario_io
from governor.bounds import DoubleIntegratorGains, StateVec, prediction_series
from governor.simulator import RunStatus, run

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def short_log():
    return run(scenario_io.bundled("empty").replace(t_max=1.0))


def _report(**overrides) -> report.RunReport:
    fields = {
        "scenario": "s",
        "controller": "sddm",
        "status": RunStatus.GOAL_REACHED,
        "completion_time": 10.0,
        "distance": 5.0,
        "mean_speed": 0.5,
        "max_speed": 1.0,
        "min_clearance": 0.4,
        "min_delta_e": 0.1,
        "replans": 0,
    }
    return report.RunReport(**(fields | overrides))


def test_trajectory_csv_round_trips_floats(short_log, tmp_path):
    out = report.write_trajectory_csv(short_log, tmp_path / "trajectory.csv")
    with out.open(newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == report.TRAJECTORY_COLUMNS
    assert len(rows) == len(short_log.rows) + 1
    last = short_log.rows[-1]
    values = [float(v) for v in rows[-1]]
    assert values[0] == last.t
    assert values[1:3] == last.robot_pos.tolist()
    assert values[5:7] == last.gov_pos.tolist()
    assert values[8] == last.eta
    assert math.isinf(values[-1])


def test_summary_of_unfinished_run(short_log):
    summary = report.summarize(short_log)
    assert summary.status == RunStatus.TIMEOUT
    assert summary.completion_time is None
    assert summary.distance > 0.0
    assert 0.0 < summary.mean_speed <= summary.max_speed
    assert summary.min_clearance == math.inf
    text = report.format_reports([summary])
    assert text.startswith("scenario: empty\n")
    assert "Timeout" in text
    assert "completion time [s]" in text


def test_completion_ratio():
    assert report.completion_ratio(_report(completion_time=8.0), _report(completion_time=10.0)) == 0.8
    assert report.completion_ratio(_report(completion_time=None), _report()) is None


def test_format_reports_aligns_columns():
    text = report.format_reports([_report(), _report(controller="euclid", completion_time=12.5)])
    lines = text.splitlines()
    assert lines[1].split() == ["controller", "sddm", "euclid"]
    assert len({len(line) for line in lines[1:]}) == 1


def test_run_svg_draws_obstacles_and_runs(tmp_path):
    loaded = scenario_io.bundled("sparse_circles")
    log = run(loaded.replace(t_max=2.0))
    out = report.write_run_svg(loaded.env, loaded.path, [log], tmp_path / "plot.svg")
    root = ET.parse(out).getroot()
    assert root.tag == f"{SVG}svg"
    assert len(root.findall(f".//{SVG}circle")) == len(loaded.env)
    assert len(root.findall(f".//{SVG}polyline")) == 3
    assert root.findall(f".//{SVG}ellipse")
    assert len(root.findall(f".//{SVG}line")) >= report.SVG_SNAPSHOTS


def test_run_svg_draws_walls(tmp_path):
    loaded = scenario_io.bundled("corridor")
    out = report.write_run_svg(loaded.env, loaded.path, [], tmp_path / "plot.svg")
    root = ET.parse(out).getroot()
    assert len(root.findall(f".//{SVG}line")) == 2
    assert len(root.findall(f".//{SVG}rect")) == 1


def test_prediction_outputs(tmp_path):
    gains = DoubleIntegratorGains(k=1.0, zeta=2.0 * math.sqrt(2.0))
    s0 = StateVec(pos_err=(-2.0, 0.0), vel=(0.0, 2.0))
    samples = prediction_series(gains, s0, 1.0, 4.0, np.linspace(0.0, 3.0, 7))
    csv_out = report.write_prediction_csv(samples, tmp_path / "prediction.csv")
    assert csv_out.read_text().splitlines()[0] == ",".join(report.PREDICTION_COLUMNS)
    svg_out = report.write_prediction_svg(samples, 1.0, tmp_path / "prediction.svg")
    root = ET.parse(svg_out).getroot()
    assert len(root.findall(f".//{SVG}polyline")) == 1
    assert 7 <= len(root.findall(f".//{SVG}ellipse")) <= 14


def test_boundcheck_csv(tmp_path):
    out = report.write_boundcheck_csv([[0, 1.0, 2.0, 1.0, 4.0, 0.0, 0.0, 0.0, 1.0]], tmp_path / "b.csv")
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(report.BOUNDCHECK_COLUMNS)
    assert lines[1] == "0,1.0,2.0,1.0,4.0,0.0,0.0,0.0,1.0"
