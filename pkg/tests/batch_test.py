import asyncio
import math
import threading
import time
from dataclasses import replace
from unittest import mock

import numpy as np
import pytest

from governor import batch, scenario as scenario_io
from governor.controllers import Controller
from governor.errors import InvalidParametersError
from governor.simulator import RunStatus


async def test_run_batch_keeps_submission_order():
    def job(i):
        time.sleep(0.01 * (5 - i))
        return i

    results = await batch.run_batch([lambda i=i: job(i) for i in range(5)], workers=5)
    assert results == [0, 1, 2, 3, 4]


async def test_run_batch_limits_workers():
    lock = threading.Lock()
    active = peak = 0

    def job():
        nonlocal active, peak
        with lock:
            active += 1
            peak = max(peak, active)
        time.sleep(0.01)
        with lock:
            active -= 1

    await batch.run_batch([job] * 6, workers=2)
    assert 1 <= peak <= 2


async def test_run_in_thread_names_the_job_on_timeout():
    def slow_job():
        return 1

    with mock.patch("governor.batch.asyncio.wait_for", side_effect=asyncio.TimeoutError):
        with pytest.raises(TimeoutError, match="Job 'slow_job' timed out after 0.5 seconds"):
            await batch.run_in_thread(slow_job, 0.5)


async def test_run_in_thread_real_timeout():
    with pytest.raises(TimeoutError, match="timed out"):
        await batch.run_in_thread(lambda: time.sleep(0.3), 0.01)


async def test_compare_controllers_runs_both():
    loaded = scenario_io.bundled("empty")
    sddm, euclid = await batch.compare_controllers(loaded)
    assert sddm.controller == Controller.SDDM
    assert euclid.controller == Controller.EUCLID
    assert sddm.status == euclid.status == RunStatus.GOAL_REACHED


async def test_boundcheck_single_case_is_equilibrium():
    result = await batch.boundcheck(1, 0)
    (row,) = result.rows
    assert (row.case, row.eta, row.delta, row.oracle) == (0, 0.0, 0.0, 0.0)
    assert row.ratio == 1.0
    assert result.passed
    assert result.median_ratio == 1.0


async def test_boundcheck_small_batch_passes():
    result = await batch.boundcheck(25, 11, workers=2)
    assert [row.case for row in result.rows] == list(range(25))
    assert result.violations == []
    assert result.median_ratio <= batch.RATIO_GATE
    for row in result.rows[1:]:
        assert row.oracle <= row.eta + batch.ORDER_SLACK
        assert row.eta <= row.delta + batch.ORDER_SLACK


def test_bound_cases_are_seeded():
    first = batch.bound_cases(5, 3)
    again = batch.bound_cases(5, 3)
    assert [c.c2 for c in first] == [c.c2 for c in again]
    assert [c.c2 for c in first] != [c.c2 for c in batch.bound_cases(5, 4)]
    for case in first[1:]:
        assert 1.5 * case.c1 <= case.c2 <= 8.0 * case.c1
        assert np.linalg.norm(case.direction) == pytest.approx(1.0)
    with pytest.raises(InvalidParametersError):
        batch.bound_cases(0, 3)


def test_bound_cases_vary_damping_and_direction():
    cases = batch.bound_cases(60, 5)[1:]
    critical = [case.gains.is_critically_damped for case in cases]
    assert any(critical) and not all(critical)
    for case in cases:
        factor = case.gains.zeta / math.sqrt(8.0 * case.gains.k)
        assert batch.DAMPING_RANGE[0] <= factor <= batch.DAMPING_RANGE[1]
    offsets = [
        abs(float(case.direction @ case.s0.pos_err)) / np.linalg.norm(case.s0.pos_err) for case in cases
    ]
    assert min(offsets) < 0.9


def test_violation_flags():
    row = batch.BoundCheckRow(case=1, k=1.0, zeta=2.0, c1=1.0, c2=4.0, eta=1.0, delta=1.5, oracle=0.99)
    assert not row.violation
    assert row.ratio == 1.5
    assert replace(row, oracle=1.1).violation
    assert replace(row, delta=0.9).violation
    failing = batch.BoundCheckResult(rows=[row, replace(row, delta=5.0)])
    assert not failing.passed
    assert failing.median_ratio == pytest.approx(3.25)
