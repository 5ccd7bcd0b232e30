"""Fan independent runs and bound-check cases out to worker threads."""

import asyncio
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import TypeVar

import numpy as np

from .bounds import HORIZON_FACTOR, DoubleIntegratorGains, StateVec, bound, build_double_integrator, sampled_peak
from .controllers import Controller
from .errors import InvalidParametersError
from .metric import Vec2, as_vec2, directional_matrix
from .simulator import Scenario, TrajectoryLog, run

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_SECONDS = 600.0
DEFAULT_WORKERS = 4

# oracle grid step in units of 1/|lambda|
ORACLE_STEP = 2.5e-4
ORDER_SLACK = 1e-9
RATIO_GATE = 2.0
# damping drawn as a multiple of the critical value
DAMPING_RANGE = (0.75, 1.5)
CRITICAL_SHARE = 1.0 / 3.0

T = TypeVar("T")


async def run_in_thread(fn: Callable[[], T], timeout_seconds: float | None = DEFAULT_TIMEOUT_SECONDS) -> T:
    """Run a blocking job in a worker thread with a timeout."""
    try:
        return await asyncio.wait_for(asyncio.to_thread(fn), timeout=timeout_seconds)
    except TimeoutError as exc:
        name = getattr(fn, "__name__", repr(fn))
        raise TimeoutError(f"Job '{name}' timed out after {timeout_seconds} seconds") from exc


async def run_batch(
    jobs: Sequence[Callable[[], T]],
    *,
    workers: int = DEFAULT_WORKERS,
    timeout_seconds: float | None = DEFAULT_TIMEOUT_SECONDS,
) -> list[T]:
    """Run jobs concurrently; results come back in submission order."""
    gate = asyncio.Semaphore(max(1, workers))

    async def guarded(job: Callable[[], T]) -> T:
        async with gate:
            return await run_in_thread(job, timeout_seconds)

    return list(await asyncio.gather(*(guarded(job) for job in jobs)))


async def compare_controllers(
    scenario: Scenario, timeout_seconds: float | None = DEFAULT_TIMEOUT_SECONDS
) -> list[TrajectoryLog]:
    """The same scenario under the SDDM governor and the Euclidean baseline, in that order."""
    variants = [scenario.replace(controller=kind) for kind in (Controller.SDDM, Controller.EUCLID)]
    return await run_batch([lambda s=s: run(s) for s in variants], timeout_seconds=timeout_seconds)


@dataclass(kw_only=True, frozen=True, eq=False)
class BoundCase:
    index: int
    gains: DoubleIntegratorGains
    c1: float
    c2: float
    direction: Vec2
    s0: StateVec


@dataclass(kw_only=True, frozen=True)
class BoundCheckRow:
    case: int
    k: float
    zeta: float
    c1: float
    c2: float
    eta: float
    delta: float
    oracle: float

    @property
    def ratio(self) -> float:
        """delta / eta, taken as 1 at equilibrium."""
        return 1.0 if self.eta == 0.0 else self.delta / self.eta

    @property
    def violation(self) -> bool:
        return self.oracle > self.eta + ORDER_SLACK or self.eta > self.delta + ORDER_SLACK

    def as_list(self) -> list[float]:
        return [self.case, self.k, self.zeta, self.c1, self.c2, self.eta, self.delta, self.oracle, self.ratio]


@dataclass(kw_only=True, frozen=True)
class BoundCheckResult:
    rows: list[BoundCheckRow]

    @property
    def violations(self) -> list[BoundCheckRow]:
        return [row for row in self.rows if row.violation]

    @property
    def median_ratio(self) -> float:
        ratios = [row.ratio for row in self.rows if row.eta > 0.0]
        return float(np.median(ratios)) if ratios else 1.0

    @property
    def passed(self) -> bool:
        return not self.violations and self.median_ratio <= RATIO_GATE


def bound_cases(count: int, seed: int) -> list[BoundCase]:
    """
    Case 0 is the robot at rest on the governor. The rest draw the stiffness, the
    damping (critical in about a third of the cases), the metric weights, a metric
    direction and the initial state independently.
    """
    if count < 1:
        raise InvalidParametersError(f"count={count} must be at least 1")
    rng = np.random.default_rng(seed)
    cases = []
    for index in range(count):
        if index == 0:
            cases.append(
                BoundCase(
                    index=0,
                    gains=DoubleIntegratorGains.critically_damped(1.0),
                    c1=1.0,
                    c2=4.0,
                    direction=as_vec2((1.0, 0.0)),
                    s0=StateVec(pos_err=(0.0, 0.0), vel=(0.0, 0.0)),
                )
            )
            continue
        k = float(rng.uniform(0.25, 4.0))
        gains = DoubleIntegratorGains.critically_damped(k)
        if rng.random() >= CRITICAL_SHARE:
            gains = DoubleIntegratorGains(k=k, zeta=gains.zeta * float(rng.uniform(*DAMPING_RANGE)))
        c1 = float(rng.uniform(0.5, 2.0))
        c2 = c1 * float(rng.uniform(1.5, 8.0))
        angle = float(rng.uniform(-np.pi, np.pi))
        pos_err, vel = rng.uniform(-2.0, 2.0, size=2), rng.uniform(-2.0, 2.0, size=2)
        cases.append(
            BoundCase(
                index=index,
                gains=gains,
                c1=c1,
                c2=c2,
                direction=as_vec2((np.cos(angle), np.sin(angle))),
                s0=StateVec(pos_err=pos_err, vel=vel),
            )
        )
    return cases


def check_case(case: BoundCase) -> BoundCheckRow:
    """Exact peak, relaxed bound and a dense-sampling oracle of one case."""
    q = directional_matrix(case.direction, case.c1, case.c2).q
    system = build_double_integrator(case.gains, q)
    result = bound(system, case.s0)
    rate = abs(system.abscissa)
    oracle = sampled_peak(system, case.s0, ORACLE_STEP / rate, 0.5 * HORIZON_FACTOR / rate)
    row = BoundCheckRow(
        case=case.index,
        k=case.gains.k,
        zeta=case.gains.zeta,
        c1=case.c1,
        c2=case.c2,
        eta=result.eta,
        delta=result.delta,
        oracle=oracle,
    )
    if row.violation:
        logger.warning(
            "bound violation case=%d k=%.6g zeta=%.6g c1=%.6g c2=%.6g dir=%s s0=%s "
            "eta=%.12g delta=%.12g oracle=%.12g",
            case.index,
            case.gains.k,
            case.gains.zeta,
            case.c1,
            case.c2,
            case.direction.tolist(),
            case.s0.as_array().tolist(),
            row.eta,
            row.delta,
            row.oracle,
        )
    return row


async def boundcheck(
    count: int,
    seed: int,
    *,
    workers: int = DEFAULT_WORKERS,
    timeout_seconds: float | None = DEFAULT_TIMEOUT_SECONDS,
) -> BoundCheckResult:
    cases = bound_cases(count, seed)
    rows = await run_batch(
        [lambda c=c: check_case(c) for c in cases], workers=workers, timeout_seconds=timeout_seconds
    )
    return BoundCheckResult(rows=rows)
