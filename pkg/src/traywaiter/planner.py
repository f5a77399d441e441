"""Scenario-level trajectory synthesis.

Maps the four application cells (solid/liquid material crossed with
point-to-point/complex motion) onto smoother cascades, computes the
friction-limited duration floor that applies when tilt compensation is off,
and rolls planned point-to-point profiles along the straight segment from
start to goal (a single scalar cascade drives the arc-length parameter, so
the path stays straight).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .smoothers import (
    CascadeSpec,
    CascadeState,
    DampedHarmonic,
    Trapezoidal,
    kernel_duration,
    make_damped_harmonic_params,
    make_trapezoidal_params,
)

__all__ = [
    "Scenario",
    "PlanResult",
    "FeasibilityReport",
    "triangular_min_acc",
    "min_time",
    "friction_limited_duration",
    "plan",
    "feasibility_report",
    "rollout_profile",
    "rollout_trajectory",
]

MIN_FREE_STAGE_T = 0.05  # s, floor for the free triangular stage


def triangular_min_acc(h: float, T: float) -> float:
    """Peak acceleration of the minimum-acceleration (triangular velocity)
    point-to-point motion of length h and duration T: a = 4h/T^2."""
    if not (h > 0.0 and T > 0.0):
        raise ValueError(f"h and T must be positive, got {(h, T)}")
    return 4.0 * h / (T * T)


def min_time(h: float, a_max: float) -> float:
    """Duration of the triangular-velocity motion at the acceleration bound:
    T = 2 sqrt(h / a_max)."""
    if not (h > 0.0 and a_max > 0.0):
        raise ValueError(f"h and a_max must be positive, got {(h, a_max)}")
    return 2.0 * math.sqrt(h / a_max)


def friction_limited_duration(h_o: float, h_v: float, mu: float, g: float) -> float:
    """Duration floor T* = 2 sqrt((h_o + mu h_v) / (mu g)) below which a
    triangular-velocity move must slip when stability relies on friction
    alone (worst-case vertical coupling z_ddot = -4 h_v / T^2 assumed).

    Returns inf when mu == 0 with lateral displacement (infeasible).
    """
    if g <= 0.0:
        raise ValueError(f"g must be positive, got {g}")
    if h_o < 0.0 or h_v < 0.0 or mu < 0.0:
        raise ValueError("h_o, h_v, mu must be non-negative")
    if mu == 0.0:
        if h_o > 0.0:
            return math.inf
        return 2.0 * math.sqrt(h_v / g)  # mu cancels for pure vertical motion
    return 2.0 * math.sqrt((h_o + mu * h_v) / (mu * g))


@dataclass
class Scenario:
    """One transport task: what is carried and what kind of motion drives it.

    Point-to-point scenarios need start, goal and kinematic limits; liquid
    scenarios need the slosh parameters (omega_n, delta). free_stage_T fixes
    the free triangular stage; leave it None to have plan() search for the
    smallest value keeping the simulated tilt acceleration under
    angular_accel_cap.
    """

    material: str                      # "solid" | "liquid"
    motion: str                        # "point_to_point" | "complex"
    start: np.ndarray | None = None
    goal: np.ndarray | None = None
    v_max: float | None = None
    a_max: float | None = None
    omega_n: float | None = None
    delta: float = 0.0
    free_stage_T: float | None = None
    angular_accel_cap: float = 20.0    # rad/s^2
    input_class: int | None = None     # continuity class of the reference
    cor_offset_d_z: float = 0.0        # CoR offset from the CoM, for reports
    g: float = 9.81

    def __post_init__(self):
        if self.material not in ("solid", "liquid"):
            raise ValueError(f"material must be 'solid' or 'liquid', got {self.material!r}")
        if self.motion not in ("point_to_point", "complex"):
            raise ValueError(
                f"motion must be 'point_to_point' or 'complex', got {self.motion!r}")
        if self.start is not None:
            self.start = np.asarray(self.start, dtype=float)
        if self.goal is not None:
            self.goal = np.asarray(self.goal, dtype=float)
        if self.motion == "point_to_point":
            if self.start is None or self.goal is None:
                raise ValueError("point-to-point scenario needs start and goal")
            if self.v_max is None or self.a_max is None:
                raise ValueError("point-to-point scenario needs v_max and a_max")
            if not (self.v_max > 0.0 and self.a_max > 0.0):
                raise ValueError("kinematic limits must be positive")
        if self.material == "liquid":
            if self.omega_n is None:
                raise ValueError("liquid scenario needs the slosh frequency omega_n")
            if not (self.omega_n > 0.0 and 0.0 <= self.delta < 1.0):
                raise ValueError("liquid scenario needs omega_n > 0 and delta in [0, 1)")
        if self.free_stage_T is not None and self.free_stage_T <= 0.0:
            raise ValueError("free_stage_T must be positive")
        if self.input_class is None:
            self.input_class = -1 if self.motion == "point_to_point" else 2

    @property
    def displacement(self) -> float:
        return float(np.linalg.norm(self.goal - self.start))

    @property
    def direction(self) -> np.ndarray:
        d = self.goal - self.start
        n = np.linalg.norm(d)
        if n == 0.0:
            return np.array([1.0, 0.0, 0.0])
        return d / n

    @property
    def horizontal_vertical_split(self) -> tuple[float, float]:
        d = self.goal - self.start
        return float(math.hypot(d[0], d[1])), float(abs(d[2]))


@dataclass
class PlanResult:
    cascade: CascadeSpec
    duration: float                    # total kernel support, s
    distance: float
    direction: np.ndarray
    input_class: int
    output_class: int
    free_stage_T: float | None
    notes: list = field(default_factory=list)

    @property
    def jerk_continuous(self) -> bool:
        """Tilt compensation needs at least C^3 position."""
        return self.output_class >= 3


@dataclass
class FeasibilityReport:
    tilt_enabled: bool
    friction_floor: float | None       # s; None = no floor, inf = infeasible
    caveats: list
    assumptions: list

    def render(self) -> str:
        lines = []
        if not self.tilt_enabled:
            if self.friction_floor == math.inf:
                lines.append("friction floor: infeasible (mu = 0 with lateral motion)")
            else:
                lines.append(f"friction floor: T >= {self.friction_floor!r} s "
                             "(duration below this slips)")
        elif self.friction_floor is None:
            lines.append("friction floor: none (tilt compensation removes the bound)")
        for c in self.caveats:
            lines.append(f"caveat: {c}")
        for a in self.assumptions:
            lines.append(f"assumption: {a}")
        return "\n".join(lines)


def _max_tilt_accel(stages, h: float, direction: np.ndarray, g: float) -> float:
    """Max |beta_ddot| of the compensation angle along the planned step."""
    total = sum(kernel_duration(s) for s in stages)
    dt = total / 3000.0
    state = CascadeState(CascadeSpec(tuple(stages)), dt, initial_value=0.0)
    n = int(total / dt) + 8
    _, _, acc = state.run(np.full(n, h))
    ax, ay, az = (acc * direction[i] for i in range(3))
    gz = g + az
    if np.any(gz <= 0.0):
        raise ValueError("planned motion reaches free fall; lower a_max")
    beta = -np.arctan2(np.hypot(ax, ay), gz)
    beta_dd = np.gradient(np.gradient(beta, dt), dt)
    return float(np.abs(beta_dd).max())


def _search_free_stage(base_stages, h, direction, cap, g) -> float:
    """Smallest free triangular stage T (>= floor) keeping the simulated
    tilt acceleration under the cap; plain bisection, the response is
    monotone in T."""
    def ok(tf):
        return _max_tilt_accel(list(base_stages) + [Trapezoidal(tf, tf)],
                               h, direction, g) <= cap

    lo = MIN_FREE_STAGE_T
    if ok(lo):
        return lo
    hi = 2.0 * lo
    for _ in range(14):
        if ok(hi):
            break
        hi *= 2.0
    else:
        raise ValueError("no free-stage duration satisfies the angular cap")
    lo_bad = lo
    for _ in range(40):
        mid = 0.5 * (lo_bad + hi)
        if hi - lo_bad <= 1e-3 * hi:
            break
        if ok(mid):
            hi = mid
        else:
            lo_bad = mid
    return hi


def plan(scenario: Scenario) -> PlanResult:
    """Choose the smoother cascade for a scenario.

    point-to-point solid : trapezoidal (min-time under limits) + free triangular
    point-to-point liquid: trapezoidal + damped harmonic tuned to the slosh mode
    complex solid        : free triangular only
    complex liquid       : damped harmonic only
    """
    s = scenario
    notes = []
    if s.motion == "point_to_point":
        h = s.displacement
        if h == 0.0:
            raise ValueError("zero displacement: nothing to plan")
        t1, t2 = make_trapezoidal_params(h, s.v_max, s.a_max)
        base = [Trapezoidal(t1, t2)]
        if s.material == "liquid":
            sigma, T = make_damped_harmonic_params(s.omega_n, s.delta)
            stages = base + [DampedHarmonic(sigma, T)]
            free_T = None
        else:
            free_T = s.free_stage_T
            if free_T is None:
                free_T = _search_free_stage(base, h, s.direction,
                                            s.angular_accel_cap, s.g)
                notes.append(f"free stage set to {free_T:.6g} s by bisection "
                             f"against the {s.angular_accel_cap} rad/s^2 tilt cap")
            stages = base + [Trapezoidal(free_T, free_T)]
        direction = s.direction
    else:
        h = 0.0
        direction = np.array([1.0, 0.0, 0.0])
        if s.material == "liquid":
            sigma, T = make_damped_harmonic_params(s.omega_n, s.delta)
            stages = [DampedHarmonic(sigma, T)]
            free_T = None
        else:
            free_T = s.free_stage_T
            if free_T is None:
                free_T = MIN_FREE_STAGE_T
                notes.append("free stage left at the floor; tune against the "
                             "robot's angular-rate limits")
            stages = [Trapezoidal(free_T, free_T)]

    spec = CascadeSpec(tuple(stages))
    out_class = s.input_class + spec.continuity_gain()
    if out_class < 3:
        notes.append("output is below C^3: tilt compensation would demand "
                     "unbounded angular acceleration")
    return PlanResult(spec, spec.total_duration(), h, direction,
                      s.input_class, out_class, free_T, notes)


def feasibility_report(scenario: Scenario, tilt_enabled: bool,
                       mu: float | None = None) -> FeasibilityReport:
    """Duration feasibility of a point-to-point scenario.

    With tilt disabled the friction coefficient bounds the duration from
    below; with tilt enabled and the CoR at the CoM no friction bound
    remains and only the kinematic limits plus the free angular-rate stage
    constrain the motion.
    """
    s = scenario
    caveats = []
    assumptions = []
    if not tilt_enabled:
        if mu is None:
            raise ValueError("the friction floor needs the friction coefficient mu")
        h_o, h_v = s.horizontal_vertical_split
        floor = friction_limited_duration(h_o, h_v, mu, s.g)
        assumptions.append("worst-case vertical coupling z_ddot = -4 h_v / T^2")
        return FeasibilityReport(False, floor, caveats, assumptions)
    if s.cor_offset_d_z != 0.0:
        caveats.append(
            f"CoR offset d_z = {s.cor_offset_d_z} m from the CoM: sticking "
            "additionally requires |d_z M beta_ddot| <= F_s; keep the free "
            "stage long enough")
    return FeasibilityReport(True, None, caveats, assumptions)


def rollout_profile(result: PlanResult, dt: float, settle: float = 0.0,
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Roll the planned cascade on the step input.

    Returns (t, s, s_dot, s_ddot) for the arc-length parameter, starting with
    one rest sample at t = 0; the goal is reached exactly once the total
    kernel support has elapsed.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    state = CascadeState(result.cascade, dt, initial_value=0.0)
    n = int(math.ceil((result.duration + settle) / dt)) + 1
    pos, vel, acc = state.run(np.full(n, result.distance))
    t = np.arange(n + 1) * dt
    return (t,
            np.concatenate(([0.0], pos)),
            np.concatenate(([0.0], vel)),
            np.concatenate(([0.0], acc)))


def rollout_trajectory(result: PlanResult, scenario: Scenario, dt: float,
                       settle: float = 0.0):
    """Planned Cartesian trajectory along the straight start->goal segment.

    Returns (t, positions, velocities, accelerations) with shape (n, 3).
    """
    t, s, sd, sdd = rollout_profile(result, dt, settle)
    u = result.direction
    start = scenario.start
    return (t,
            start[None, :] + s[:, None] * u[None, :],
            sd[:, None] * u[None, :],
            sdd[:, None] * u[None, :])
