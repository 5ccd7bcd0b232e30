"""
Output-peak bounds for stable closed loops.

For s' = A s and z = C s the peak eta = max_{t >= 0} |z(t)|^2 is computed
exactly (closed form for a critically damped double integrator, refined dense
sampling otherwise) and bounded from above by delta, the largest value of
|C xi|^2 over an invariant ellipsoid xi^T U xi <= 1 that contains s0.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve, expm
from scipy.optimize import minimize_scalar

from .errors import InvalidParametersError, NotCriticallyDampedError, NotHurwitzError
from .lyapunov import LyapunovOperator, check_hurwitz
from .metric import (
    SymMat2,
    Vec2,
    as_vec2,
    directional_matrix,
    eig_sym2,
    ellipse_area,
    frozen,
    sqrtm_sym2,
)

# sampling horizon, in units of 1/|Re(lambda_max)|
HORIZON_FACTOR = 40.0
HORIZON_SAMPLES = 4000
# largest eigenvalue phase advance per sample; bounds the sampling error of each lobe
SAMPLE_PHASE_STEP = 0.05
# local maxima sampled within this fraction of the best sample are refined
REFINE_WINDOW = 0.05
REFINE_TOLERANCE = 1e-10
CRITICAL_DAMPING_TOLERANCE = 1e-9

FAMILY_EPSILON = 1e-6
FAMILY_RHO_LIMIT = math.log(1e3)
FAMILY_MAX_SWEEPS = 50
FAMILY_PARAM_TOLERANCE = 1e-6

BoundBackend = Literal["family", "sdp"]


@dataclass(kw_only=True, frozen=True)
class DoubleIntegratorGains:
    """PD gains of x'' = -2k (x - g) - zeta x'."""

    k: float
    zeta: float

    def __post_init__(self):
        if not (self.k > 0 and self.zeta > 0 and math.isfinite(self.k) and math.isfinite(self.zeta)):
            raise InvalidParametersError(f"gains k={self.k}, zeta={self.zeta} must be positive")

    @classmethod
    def critically_damped(cls, k: float) -> "DoubleIntegratorGains":
        return cls(k=k, zeta=math.sqrt(8.0 * k))

    @property
    def is_critically_damped(self) -> bool:
        return abs(self.zeta**2 - 8.0 * self.k) <= CRITICAL_DAMPING_TOLERANCE * max(1.0, 8.0 * self.k)

    @property
    def repeated_eigenvalue(self) -> float:
        return -0.5 * self.zeta

    def axis_matrix(self) -> NDArray[np.float64]:
        """Closed loop of a single axis acting on (position error, velocity)."""
        return np.array([[0.0, 1.0], [-2.0 * self.k, -self.zeta]])


@dataclass(kw_only=True, frozen=True, eq=False)
class ClosedLoopSystem:
    """s' = a_bar s, z = c_out s with s = (x - g, x')."""

    a_bar: NDArray[np.float64]
    c_out: NDArray[np.float64]
    gains: DoubleIntegratorGains | None = None
    abscissa: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.a_bar, dtype=np.float64)
        c = np.asarray(self.c_out, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or c.ndim != 2 or c.shape[1] != a.shape[0]:
            raise InvalidParametersError(f"incompatible shapes a_bar={a.shape}, c_out={c.shape}")
        object.__setattr__(self, "a_bar", frozen(a))
        object.__setattr__(self, "c_out", frozen(c))
        object.__setattr__(self, "abscissa", check_hurwitz(a))

    @property
    def output_form(self) -> NDArray[np.float64]:
        """C^T C, the quadratic form of |z|^2 in the state."""
        return self.c_out.T @ self.c_out

    @property
    def position_metric(self) -> SymMat2:
        """Q with |z|^2 = (x - g)^T Q (x - g), read off the position block of C."""
        block = self.c_out[:, :2]
        return block.T @ block


@dataclass(kw_only=True, frozen=True, eq=False)
class StateVec:
    pos_err: Vec2
    vel: Vec2

    def __post_init__(self):
        object.__setattr__(self, "pos_err", frozen(as_vec2(self.pos_err)))
        object.__setattr__(self, "vel", frozen(as_vec2(self.vel)))

    def as_array(self) -> NDArray[np.float64]:
        return np.concatenate([self.pos_err, self.vel])

    @classmethod
    def from_array(cls, s: ArrayLike) -> "StateVec":
        a = np.asarray(s, dtype=np.float64)
        return cls(pos_err=a[:2], vel=a[2:4])


@dataclass(kw_only=True, frozen=True)
class OutputPeakBound:
    """Exact output peak eta, attained at argmax_t, and its certified bound delta."""

    eta: float
    delta: float
    argmax_t: float

    def replace(self, **kwargs) -> "OutputPeakBound":
        return replace(self, **kwargs)


def _state(s0: StateVec | ArrayLike) -> NDArray[np.float64]:
    if isinstance(s0, StateVec):
        return s0.as_array()
    s = np.asarray(s0, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(s)):
        raise InvalidParametersError("initial state has non-finite components")
    return s


def build_double_integrator(gains: DoubleIntegratorGains, q: ArrayLike) -> ClosedLoopSystem:
    """Closed loop [[0, I], [-2k I, -zeta I]] with output z = Q^(1/2) (x - g)."""
    eye = np.eye(2)
    a_bar = np.kron(gains.axis_matrix(), eye)
    c_out = np.hstack([sqrtm_sym2(q), np.zeros((2, 2))])
    return ClosedLoopSystem(a_bar=a_bar, c_out=c_out, gains=gains)


def _candidate_roots(a2: float, b: float, c: float) -> list[float]:
    """Real roots of a2 t^2 + b t + c, or the vertex when there are none."""
    if a2 == 0.0:
        return [] if b == 0.0 else [-c / b]
    disc = b * b - 4.0 * a2 * c
    if disc < 0.0:
        return [-b / (2.0 * a2)]
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = [q / a2]
    if q != 0.0:
        roots.append(c / q)
    return roots


def exact_peak_critically_damped(
    sys: ClosedLoopSystem, s0: StateVec | ArrayLike, lam: float
) -> tuple[float, float]:
    """
    Closed-form output peak for a critically damped double integrator.

    With x(t) - g = (a + b t) e^(lam t), |z(t)|^2 = e^(2 lam t) (p0 + p1 t + p2 t^2)
    and its critical points are the roots of a quadratic.
    """
    gains = sys.gains
    if gains is None or not gains.is_critically_damped:
        raise NotCriticallyDampedError("closed-form peak needs a critically damped double integrator")
    if abs(lam - gains.repeated_eigenvalue) > CRITICAL_DAMPING_TOLERANCE * max(1.0, abs(lam)):
        raise NotCriticallyDampedError(
            f"lambda={lam} does not match the repeated eigenvalue {gains.repeated_eigenvalue}"
        )
    s = _state(s0)
    q = sys.position_metric
    a = s[:2]
    b = s[2:4] - lam * a
    qa = q @ a
    qb = q @ b
    p0 = float(a @ qa)
    p1 = 2.0 * float(a @ qb)
    p2 = float(b @ qb)

    def value(t: float) -> float:
        return math.exp(2.0 * lam * t) * (p0 + p1 * t + p2 * t * t)

    best_t, best = 0.0, p0
    for t in _candidate_roots(2.0 * lam * p2, 2.0 * lam * p1 + 2.0 * p2, 2.0 * lam * p0 + p1):
        if t > 0.0 and math.isfinite(t):
            v = value(t)
            if v > best:
                best_t, best = t, v
    return best, best_t


def _sample_trajectory(
    a_bar: NDArray[np.float64], s0: NDArray[np.float64], horizon: float, samples: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """States e^(A t_i) s0 on a uniform grid, built by repeated squaring of one step."""
    dt = horizon / samples
    power = expm(a_bar * dt)
    states = s0[None, :]
    while states.shape[0] < samples + 1:
        states = np.vstack([states, states @ power.T])
        power = power @ power
    return np.linspace(0.0, horizon, samples + 1), states[: samples + 1]


def exact_peak_general(sys: ClosedLoopSystem, s0: StateVec | ArrayLike) -> tuple[float, float]:
    """Output peak by dense sampling on [0, T] followed by bounded refinement of each local maximum."""
    s = _state(s0)
    form = sys.output_form
    if not np.any(s):
        return 0.0, 0.0

    def value(t: float) -> float:
        st = expm(sys.a_bar * t) @ s
        return float(st @ form @ st)

    horizon = HORIZON_FACTOR / abs(sys.abscissa)
    radius = float(np.max(np.abs(np.linalg.eigvals(sys.a_bar))))
    while True:
        samples = max(HORIZON_SAMPLES, math.ceil(horizon * radius / SAMPLE_PHASE_STEP))
        times, states = _sample_trajectory(sys.a_bar, s, horizon, samples)
        values = np.einsum("ij,jk,ik->i", states, form, states)
        peak = float(values.max())
        # the tail must have decayed far below the peak, otherwise a later maximum could be missed
        if values[-1] <= 1e-12 * peak or peak == 0.0:
            break
        horizon *= 2.0

    # t = 0 is taken from the initial state directly so that eta >= |z(0)|^2 holds bit for bit
    values[0] = float(s @ form @ s)
    best_index = int(np.argmax(values))
    peak = float(values[best_index])
    best_t, best = float(times[best_index]), peak
    last = len(values) - 1
    padded = np.concatenate([[-math.inf], values, [-math.inf]])
    candidates = (values >= peak * (1.0 - REFINE_WINDOW)) & (values >= padded[:-2]) & (values >= padded[2:])
    for i in np.flatnonzero(candidates):
        lo, hi = times[max(i - 1, 0)], times[min(i + 1, last)]
        res = minimize_scalar(
            lambda t: -value(t), bounds=(lo, hi), method="bounded", options={"xatol": REFINE_TOLERANCE}
        )
        refined = -float(res.fun)
        if refined > best:
            best_t, best = float(res.x), refined
    return best, best_t


def sampled_peak(sys: ClosedLoopSystem, s0: StateVec | ArrayLike, step: float, horizon: float) -> float:
    """Largest |z|^2 on the uniform grid t = 0, step, ..., horizon, without refinement."""
    s = _state(s0)
    if not np.any(s):
        return 0.0
    _, states = _sample_trajectory(sys.a_bar, s, horizon, max(1, math.ceil(horizon / step)))
    return float(np.einsum("ij,jk,ik->i", states, sys.output_form, states).max())


def peak(sys: ClosedLoopSystem, s0: StateVec | ArrayLike) -> tuple[float, float]:
    """Exact output peak, using the closed form whenever it applies."""
    if sys.gains is not None and sys.gains.is_critically_damped:
        return exact_peak_critically_damped(sys, s0, sys.gains.repeated_eigenvalue)
    return exact_peak_general(sys, s0)


class _LyapunovFamily:
    """
    Feasible invariant ellipsoids U(theta) = P(theta) / (s0^T P(theta) s0).

    P(theta) solves A^T P + P A = -S(theta) with
    S(theta) = (w w^T) kron M + eps I, w = (cos phi, sin phi) mixing position
    and velocity and M = R(psi) diag(1, e^rho) R(psi)^T weighting the plane.
    """

    def __init__(self, sys: ClosedLoopSystem, s0: NDArray[np.float64]):
        self.op = LyapunovOperator(sys.a_bar)
        self.c_out = np.asarray(sys.c_out)
        self.s0 = s0
        n = sys.a_bar.shape[0]
        self.n = n
        self.axis_dim = n // 2 if n % 2 == 0 else 1

    def rhs(self, theta: Sequence[float]) -> NDArray[np.float64]:
        phi, psi, rho = theta
        w = np.array([math.cos(phi), math.sin(phi)])
        if self.axis_dim == 2:
            c, s = math.cos(psi), math.sin(psi)
            rot = np.array([[c, -s], [s, c]])
            weight = rot @ np.diag([1.0, math.exp(rho)]) @ rot.T
            base = np.kron(np.outer(w, w), weight)
        else:
            base = np.zeros((self.n, self.n))
            base[:2, :2] = np.outer(w, w)
        return base + FAMILY_EPSILON * np.eye(self.n)

    def delta(self, theta: Sequence[float]) -> float:
        p = self.op.solve(self.rhs(theta))
        try:
            factor = cho_factor(p)
        except LinAlgError:
            return math.inf
        scale = float(self.s0 @ p @ self.s0)
        gram = self.c_out @ cho_solve(factor, self.c_out.T)
        gram = 0.5 * (gram + gram.T)
        if gram.shape == (2, 2):
            top = eig_sym2(gram).lam_max
        else:
            top = float(np.linalg.eigvalsh(gram)[-1])
        return scale * top


class _KroneckerFamily:
    """
    The same family for a double integrator, A = A1 kron I and C = [Q^(1/2), 0].

    With S = (w w^T) kron M the Lyapunov solution is P1(w) kron M, so the
    certificate reduces to 2x2 algebra:
    delta = s0^T (P1 kron M) s0 * (P1^-1)_11 * lambda_max(M^-1 Q).
    The eps I term is dropped; candidates with a singular P1 are skipped.
    """

    def __init__(self, sys: ClosedLoopSystem, s0: NDArray[np.float64]):
        op = LyapunovOperator(sys.gains.axis_matrix())
        self.basis = [
            op.solve(np.array([[1.0, 0.0], [0.0, 0.0]])),
            op.solve(np.array([[0.0, 1.0], [1.0, 0.0]])),
            op.solve(np.array([[0.0, 0.0], [0.0, 1.0]])),
        ]
        q = sys.position_metric
        self.q00, self.q01, self.q11 = float(q[0, 0]), float(q[0, 1]), float(q[1, 1])
        self.det_q = self.q00 * self.q11 - self.q01 * self.q01
        self.a = (float(s0[0]), float(s0[1]))
        self.b = (float(s0[2]), float(s0[3]))

    def delta(self, theta: Sequence[float]) -> float:
        phi, psi, rho = theta
        c, s = math.cos(phi), math.sin(phi)
        p1 = c * c * self.basis[0] + c * s * self.basis[1] + s * s * self.basis[2]
        p00, p01, p11 = float(p1[0, 0]), float(p1[0, 1]), float(p1[1, 1])
        det_p = p00 * p11 - p01 * p01
        if not (p00 > 0 and det_p > 1e-14 * p00 * p11):
            return math.inf

        cp, sp, e = math.cos(psi), math.sin(psi), math.exp(rho)
        m00 = cp * cp + e * sp * sp
        m11 = sp * sp + e * cp * cp
        m01 = (1.0 - e) * cp * sp
        det_m = m00 * m11 - m01 * m01

        def form(u: tuple[float, float], v: tuple[float, float]) -> float:
            return m00 * u[0] * v[0] + m01 * (u[0] * v[1] + u[1] * v[0]) + m11 * u[1] * v[1]

        scale = p00 * form(self.a, self.a) + 2.0 * p01 * form(self.a, self.b) + p11 * form(self.b, self.b)
        # largest root of det(Q - lam M) = 0
        mid = self.q00 * m11 + self.q11 * m00 - 2.0 * self.q01 * m01
        top = (mid + math.sqrt(max(mid * mid - 4.0 * det_m * self.det_q, 0.0))) / (2.0 * det_m)
        return scale * (p11 / det_p) * top


def _kronecker_structured(sys: ClosedLoopSystem) -> bool:
    if sys.gains is None or sys.a_bar.shape != (4, 4) or sys.c_out.shape != (2, 4):
        return False
    return not np.any(sys.c_out[:, 2:])


def _minimize_family(family: "_LyapunovFamily | _KroneckerFamily") -> float:
    """Coarse grid over theta followed by coordinate descent with bounded line searches."""
    grid = [
        (phi, psi, rho)
        for phi in np.linspace(0.0, math.pi, 12, endpoint=False)
        for psi in np.linspace(0.0, math.pi, 4, endpoint=False)
        for rho in (-0.5 * FAMILY_RHO_LIMIT, 0.0, 0.5 * FAMILY_RHO_LIMIT)
    ]
    values = [family.delta(theta) for theta in grid]
    best_index = int(np.argmin(values))
    theta = list(grid[best_index])
    best = values[best_index]
    spans = [math.pi / 12.0, math.pi / 8.0, 0.25 * FAMILY_RHO_LIMIT]
    limits = [(-math.inf, math.inf), (-math.inf, math.inf), (-FAMILY_RHO_LIMIT, FAMILY_RHO_LIMIT)]

    for _ in range(FAMILY_MAX_SWEEPS):
        previous = best
        largest_step = 0.0
        for i in range(3):
            lo = max(theta[i] - spans[i], limits[i][0])
            hi = min(theta[i] + spans[i], limits[i][1])
            if hi - lo <= FAMILY_PARAM_TOLERANCE:
                continue

            def along(x: float, i: int = i) -> float:
                trial = list(theta)
                trial[i] = x
                return family.delta(trial)

            res = minimize_scalar(
                along, bounds=(lo, hi), method="bounded", options={"xatol": FAMILY_PARAM_TOLERANCE}
            )
            if res.fun < best:
                step = abs(float(res.x) - theta[i])
                largest_step = max(largest_step, step)
                theta[i] = float(res.x)
                best = float(res.fun)
                spans[i] = max(min(spans[i], 4.0 * step), 10.0 * FAMILY_PARAM_TOLERANCE)
        if largest_step < FAMILY_PARAM_TOLERANCE or previous - best <= 1e-12 * best:
            break
    return best


def _sdp_peak(sys: ClosedLoopSystem, s0: NDArray[np.float64]) -> float:
    try:
        import cvxpy as cp
    except ImportError:
        raise InvalidParametersError(
            "the sdp backend needs cvxpy; install the 'sdp' extra"
        ) from None
    n = sys.a_bar.shape[0]
    m = sys.c_out.shape[0]
    a = np.asarray(sys.a_bar)
    c = np.asarray(sys.c_out)
    u = cp.Variable((n, n), symmetric=True)
    delta = cp.Variable()
    constraints = [
        a.T @ u + u @ a << 0,
        s0 @ u @ s0 <= 1,
        cp.bmat([[u, c.T], [c, delta * np.eye(m)]]) >> 0,
        u >> FAMILY_EPSILON * np.eye(n),
    ]
    problem = cp.Problem(cp.Minimize(delta), constraints)
    problem.solve()
    if delta.value is None:
        raise NotHurwitzError(f"semidefinite program finished with status {problem.status}")
    return float(delta.value)


def relaxed_peak(
    sys: ClosedLoopSystem, s0: StateVec | ArrayLike, backend: BoundBackend = "family"
) -> float:
    """Upper bound delta >= eta from an invariant ellipsoid through s0."""
    s = _state(s0)
    if not np.any(s):
        return 0.0
    if backend == "sdp":
        return _sdp_peak(sys, s)
    if _kronecker_structured(sys):
        return _minimize_family(_KroneckerFamily(sys, s))
    return _minimize_family(_LyapunovFamily(sys, s))


def bound(
    sys: ClosedLoopSystem, s0: StateVec | ArrayLike, backend: BoundBackend = "family"
) -> OutputPeakBound:
    """Exact peak and relaxed bound of the same trajectory."""
    eta, argmax_t = peak(sys, s0)
    return OutputPeakBound(eta=eta, delta=relaxed_peak(sys, s0, backend), argmax_t=argmax_t)


@dataclass(kw_only=True, frozen=True, eq=False)
class PredictionSample:
    t: float
    pos_err: Vec2
    eta_euclid: float
    eta_directional: float
    area_euclid: float
    area_directional: float
    q_directional: SymMat2


def prediction_series(
    gains: DoubleIntegratorGains,
    s0: StateVec | ArrayLike,
    c1: float,
    c2: float,
    times: Sequence[float],
) -> list[PredictionSample]:
    """
    Peak bounds of a robot converging to a static governor at the origin,
    measured along the way in the Euclidean metric c1 I and in Q[-x(t)].
    """
    s = _state(s0)
    a_bar = np.kron(gains.axis_matrix(), np.eye(2))
    euclid = build_double_integrator(gains, c1 * np.eye(2))
    samples = []
    for t in times:
        st = expm(a_bar * t) @ s
        metric = directional_matrix(-st[:2], c1, c2)
        eta_e, _ = peak(euclid, st)
        eta_d, _ = peak(build_double_integrator(gains, metric.q), st)
        samples.append(
            PredictionSample(
                t=float(t),
                pos_err=frozen(st[:2]),
                eta_euclid=eta_e,
                eta_directional=eta_d,
                area_euclid=ellipse_area(c1 * np.eye(2), eta_e),
                area_directional=ellipse_area(metric.q, eta_d),
                q_directional=metric.q,
            )
        )
    return samples
