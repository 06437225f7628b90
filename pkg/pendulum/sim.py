#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Closed-loop simulation of the pendulum under either controller.

Features:
- Fixed-step classical Runge-Kutta integration of the plant state joined with
  the adaptive parameters theta_f, theta_g (one augmented ODE)
- Zero-order-hold control: u is computed once per step from the sampled
  state and held over the stages
- Time-varying plant parameters through step, ramp and sinusoidal multipliers
- True-state or backward-difference measurement of the rates
- Trajectory recording, tracking metrics and window comparisons
- Divergence detection with the partial trajectory kept for diagnosis

A run owns all of its mutable state, so independent runs may execute
concurrently.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from shared.errors import ScenarioInvalidError, SimulationDivergence
from shared.result_store import calculate_content_hash
from pendulum.control import (
    AdaptiveControllerConfig,
    AdaptiveFuzzyController,
    ClassicalController,
    FLControllerConfig,
    ReferenceSignal,
    reference,
)
from pendulum.fuzzy import FuzzyApproximator, default_partitions, fit_from_samples, init_from_function
from pendulum.plant import (
    PhysicalParams,
    backward_difference_estimate,
    check_physical_invariants,
    derive_coefficients,
    plant_derivative,
    true_f,
)

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
FINAL_FRACTION = 0.25
OFFLINE_RIDGE = 1e-2
OFFLINE_MAX_SAMPLES = 2000

_POSITIVE_PARAMS = ("J1", "m1", "l1")
_NONZERO_PARAMS = ("k1", "k_p")


# ============================================================================
# Parameter schedules
# ============================================================================

class ScheduleEvent(BaseModel):
    """Multiplier applied to one physical parameter from a start time on.

    Kinds:
    - step: multiplier equals magnitude for t >= start
    - ramp: rises linearly from 1 at start to magnitude at end, then holds
    - sine: 1 + magnitude*sin(2*pi*(t - start)/period) for t >= start
    """
    model_config = ConfigDict(frozen=True)

    target: Literal["m1", "k1", "a_p", "J1", "g", "l1", "c1", "k_p"]
    kind: Literal["step", "ramp", "sine"]
    start: float = Field(0.0, ge=0, allow_inf_nan=False)
    magnitude: float = Field(..., allow_inf_nan=False)
    end: Optional[float] = Field(None, allow_inf_nan=False)
    period: Optional[float] = Field(None, gt=0, allow_inf_nan=False)

    @model_validator(mode='after')
    def validate_shape(self) -> 'ScheduleEvent':
        if self.kind == "ramp":
            if self.end is None or not self.end > self.start:
                raise ValueError(f"ramp needs an end time after its start {self.start}")
        elif self.end is not None:
            raise ValueError(f"'end' only applies to ramp events, not {self.kind}")
        if self.kind == "sine":
            if self.period is None:
                raise ValueError("sine events need a period")
        elif self.period is not None:
            raise ValueError(f"'period' only applies to sine events, not {self.kind}")
        return self

    def multiplier(self, t):
        if t < self.start:
            return 1.0
        if self.kind == "step":
            return self.magnitude
        if self.kind == "ramp":
            if t >= self.end:
                return self.magnitude
            return 1.0 + (self.magnitude - 1.0) * (t - self.start) / (self.end - self.start)
        return 1.0 + self.magnitude * math.sin(2.0 * math.pi * (t - self.start) / self.period)

    def multiplier_range(self):
        """Smallest and largest multiplier the event can produce"""
        if self.kind == "sine":
            return (1.0 - abs(self.magnitude), 1.0 + abs(self.magnitude))
        return (min(1.0, self.magnitude), max(1.0, self.magnitude))


class ParameterSchedule(BaseModel):
    """Ordered list of multiplier events; events on one target multiply"""
    model_config = ConfigDict(frozen=True)

    events: Tuple[ScheduleEvent, ...] = ()

    @property
    def targets(self):
        return tuple(sorted({event.target for event in self.events}))

    def change_times(self):
        return sorted({event.start for event in self.events})

    def multipliers(self, t):
        """Active multiplier per scheduled target at time t"""
        result = {}
        for event in self.events:
            result[event.target] = result.get(event.target, 1.0) * event.multiplier(t)
        return result

    def check(self, base):
        """Verify that no multiplier can break the physical invariants.

        Args:
            base (PhysicalParams): Unscheduled parameters

        Raises:
            ScenarioInvalidError: Some reachable value violates an invariant
        """
        for target in self.targets:
            ranges = [event.multiplier_range() for event in self.events if event.target == target]
            products = [math.prod(combo) for combo in itertools.product(*ranges)]
            value = getattr(base, target)
            extremes = (value * min(products), value * max(products))

            if target in _POSITIVE_PARAMS and not all(v > 0 for v in extremes):
                raise ScenarioInvalidError(
                    f"schedule drives {target} to {min(extremes):.6g}, it must stay positive"
                )
            if target in _NONZERO_PARAMS and not (all(v > 0 for v in extremes) or all(v < 0 for v in extremes)):
                raise ScenarioInvalidError(f"schedule drives {target} through zero")


def apply_schedule(base, sched, t):
    """Parameters in effect at time t.

    Args:
        base (PhysicalParams): Unscheduled parameters
        sched (ParameterSchedule): Multiplier events
        t (float): Time (s)

    Returns:
        PhysicalParams: base with every active multiplier applied

    Raises:
        ScenarioInvalidError: the scaled parameters violate an invariant
    """
    params = base.scaled(sched.multipliers(t))
    problems = check_physical_invariants(params)
    if problems:
        raise ScenarioInvalidError(f"parameters at t={t:.6g} are invalid: {'; '.join(problems)}")
    return params


# ============================================================================
# Scenario, trajectory, metrics
# ============================================================================

class ScenarioConfig(BaseModel):
    """Everything one experiment needs"""
    model_config = ConfigDict(frozen=True)

    controller: Literal["classical", "adaptive"] = "classical"
    preset: Optional[Literal["stable", "matched", "paper"]] = None
    plant: PhysicalParams = Field(default_factory=PhysicalParams)
    reference: ReferenceSignal = Field(default_factory=ReferenceSignal)
    classical: FLControllerConfig = Field(default_factory=FLControllerConfig)
    adaptive: AdaptiveControllerConfig = Field(default_factory=AdaptiveControllerConfig)
    schedule: ParameterSchedule = Field(default_factory=ParameterSchedule)
    initial_state: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    dt: float = Field(1e-3, gt=0, allow_inf_nan=False)
    t_end: float = Field(20.0, gt=0, allow_inf_nan=False)
    measurement: Literal["true-state", "backward-difference"] = "true-state"
    seed: int = 0
    compare: bool = False
    settle_threshold: float = Field(0.05, gt=0)

    @field_validator('initial_state')
    @classmethod
    def validate_initial_state(cls, v: Tuple[float, float, float, float]) -> Tuple[float, float, float, float]:
        if not all(math.isfinite(c) for c in v):
            raise ValueError(f"initial state must be finite. Got: {v}")
        return v

    @model_validator(mode='after')
    def validate_horizon(self) -> 'ScenarioConfig':
        if not self.t_end > self.dt:
            raise ValueError(f"t_end ({self.t_end}) must exceed dt ({self.dt})")
        return self

    @property
    def steps(self):
        return step_count(self.t_end, self.dt)


def step_count(t_end, dt):
    """Number of integration steps; the trajectory holds one more sample"""
    return int(math.floor(t_end / dt + 1e-9))


def validate_scenario(cfg):
    """Plant and schedule checks that pydantic field validation cannot express.

    Raises:
        ScenarioInvalidError: invalid plant parameters or schedule
    """
    problems = check_physical_invariants(cfg.plant)
    if problems:
        raise ScenarioInvalidError(f"invalid plant parameters: {'; '.join(problems)}")
    cfg.schedule.check(cfg.plant)


@dataclass
class Trajectory:
    """Uniformly sampled record of one run.

    Attributes:
        controller (str): 'classical' or 'adaptive'
        t (numpy.ndarray): Sample times
        states (numpy.ndarray): Plant states, shape (N, 4)
        u (numpy.ndarray): Held control input at each sample
        ym (numpy.ndarray): Reference
        e (numpy.ndarray): Tracking error y_m - y
        theta_f_norm, theta_g_norm (numpy.ndarray): Infinity norms of the
            adaptive parameters (zero for the classical controller)
        clamp (numpy.ndarray): 1 where the g_hat floor was used
        multipliers (dict): Scheduled target -> multiplier at each sample
        warnings (list): Diagnostics collected while building the controller
        theta_rows (dict): Final theta exports ('theta_f', 'theta_g') for the
            adaptive controller
    """
    controller: str
    t: np.ndarray
    states: np.ndarray
    u: np.ndarray
    ym: np.ndarray
    e: np.ndarray
    theta_f_norm: np.ndarray
    theta_g_norm: np.ndarray
    clamp: np.ndarray
    multipliers: Dict[str, np.ndarray] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    theta_rows: Dict[str, list] = field(default_factory=dict)

    @classmethod
    def allocate(cls, controller, count, targets=()):
        return cls(
            controller=controller,
            t=np.zeros(count),
            states=np.zeros((count, 4)),
            u=np.zeros(count),
            ym=np.zeros(count),
            e=np.zeros(count),
            theta_f_norm=np.zeros(count),
            theta_g_norm=np.zeros(count),
            clamp=np.zeros(count),
            multipliers={target: np.ones(count) for target in targets},
        )

    def __len__(self):
        return self.t.shape[0]

    @property
    def y(self):
        return self.states[:, 2]

    def truncated(self, count):
        """Copy holding only the first count samples"""
        return Trajectory(
            controller=self.controller,
            t=self.t[:count].copy(),
            states=self.states[:count].copy(),
            u=self.u[:count].copy(),
            ym=self.ym[:count].copy(),
            e=self.e[:count].copy(),
            theta_f_norm=self.theta_f_norm[:count].copy(),
            theta_g_norm=self.theta_g_norm[:count].copy(),
            clamp=self.clamp[:count].copy(),
            multipliers={k: v[:count].copy() for k, v in self.multipliers.items()},
            warnings=list(self.warnings),
            theta_rows=dict(self.theta_rows),
        )


def trajectory_digest(traj):
    """sha256 over every recorded array, in a fixed order"""
    chunks = [traj.controller.encode('utf-8')]
    for array in (traj.t, traj.states, traj.u, traj.ym, traj.e,
                  traj.theta_f_norm, traj.theta_g_norm, traj.clamp):
        chunks.append(np.ascontiguousarray(array, dtype=float).tobytes())
    for target in sorted(traj.multipliers):
        chunks.append(target.encode('utf-8'))
        chunks.append(np.ascontiguousarray(traj.multipliers[target], dtype=float).tobytes())
    return calculate_content_hash(b"".join(chunks))


class Metrics(BaseModel):
    """Tracking quality of one trajectory"""
    band_min: float = Field(..., description="Smallest error in the final window")
    band_max: float = Field(..., description="Largest error in the final window")
    rms_full: float = Field(..., ge=0)
    rms_final: float = Field(..., ge=0)
    max_abs: float = Field(..., ge=0)
    settle_time: Optional[float] = Field(None, description="First time after which |e| stays below the threshold")
    settle_threshold: float
    final_window_start: float


class WindowMetrics(BaseModel):
    t0: float
    t1: float
    rms: float
    max_abs: float
    samples: int


class RobustnessSummary(BaseModel):
    """Error before and after a parameter change"""
    change_time: float
    pre_rms: float
    post_rms: float
    recovery_start: float
    recovered_max_abs: Optional[float]


def _rms(values):
    return float(np.sqrt(np.mean(np.square(values))))


def compute_metrics(traj, threshold=0.05, final_fraction=FINAL_FRACTION):
    """Summarise the tracking error of a trajectory.

    Args:
        traj (Trajectory): Recorded run
        threshold (float): Settling threshold on |e|
        final_fraction (float): Share of the run treated as steady state

    Returns:
        Metrics: Error band and RMS of the final window, full-run RMS, max |e|
            and settle time
    """
    if len(traj) == 0:
        raise ValueError("cannot compute metrics of an empty trajectory")

    t = traj.t
    e = traj.e
    window_start = t[-1] - final_fraction * (t[-1] - t[0])
    final = e[t >= window_start]

    above = np.abs(e) >= threshold
    if not above.any():
        settle_time = float(t[0])
    elif above[-1]:
        settle_time = None
    else:
        settle_time = float(t[np.nonzero(above)[0][-1] + 1])

    return Metrics(
        band_min=float(final.min()),
        band_max=float(final.max()),
        rms_full=_rms(e),
        rms_final=_rms(final),
        max_abs=float(np.abs(e).max()),
        settle_time=settle_time,
        settle_threshold=threshold,
        final_window_start=float(window_start),
    )


def compute_window_metrics(traj, t0, t1=None):
    """RMS and max |e| over t0 <= t < t1 (to the end when t1 is None)"""
    mask = traj.t >= t0
    if t1 is not None:
        mask &= traj.t < t1
    window = traj.e[mask]
    if window.size == 0:
        raise ValueError(f"no samples in window [{t0}, {t1})")
    return WindowMetrics(
        t0=t0,
        t1=float(traj.t[-1]) if t1 is None else t1,
        rms=_rms(window),
        max_abs=float(np.abs(window).max()),
        samples=int(window.size),
    )


def robustness_summary(traj, change_time, recovery=5.0, lookback=5.0):
    """Compare tracking before and after a parameter change.

    Args:
        traj (Trajectory): Recorded run
        change_time (float): Time of the parameter change
        recovery (float): Time allowed to re-converge after the change
        lookback (float): Length of the pre-change window

    Returns:
        RobustnessSummary: Pre/post RMS and max |e| once the recovery time passed
    """
    pre = compute_window_metrics(traj, max(float(traj.t[0]), change_time - lookback), change_time)
    post = compute_window_metrics(traj, change_time)
    recovery_start = change_time + recovery
    recovered = None
    if traj.t[-1] >= recovery_start:
        recovered = compute_window_metrics(traj, recovery_start).max_abs
    return RobustnessSummary(
        change_time=change_time,
        pre_rms=pre.rms,
        post_rms=post.rms,
        recovery_start=recovery_start,
        recovered_max_abs=recovered,
    )


# ============================================================================
# Integration
# ============================================================================

def _finite(values, t, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise SimulationDivergence(f"non-finite {what}", t)
    return values


def rk4_step(field, s, t, dt):
    """One classical fourth-order Runge-Kutta step.

    Args:
        field (callable): field(t, s) -> ds/dt
        s (array-like): Current (augmented) state
        t (float): Current time
        dt (float): Step size, > 0

    Returns:
        numpy.ndarray: State at t + dt

    Raises:
        SimulationDivergence: a stage derivative or the result is not finite
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive. Got: {dt}")
    s = np.asarray(s, dtype=float)
    half = 0.5 * dt
    k1 = _finite(field(t, s), t, "stage value")
    k2 = _finite(field(t + half, s + half * k1), t, "stage value")
    k3 = _finite(field(t + half, s + half * k2), t, "stage value")
    k4 = _finite(field(t + dt, s + dt * k3), t, "stage value")
    return _finite(s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t + dt, "state")


# ============================================================================
# Closed loop
# ============================================================================

def offline_theta(cfg):
    """Fit theta_f to f sampled along a classical run on the nominal plant.

    The classical controller plays the role of the off-line experiment whose
    input/output behaviour seeds the rule base; rules it never visits keep
    their grid-sampled value.

    Args:
        cfg (ScenarioConfig): Scenario whose horizon, reference and partitions are used

    Returns:
        numpy.ndarray: Initial theta_f
    """
    nominal_cfg = cfg.model_copy(update={
        "controller": "classical",
        "schedule": ParameterSchedule(),
        "measurement": "true-state",
    })
    logger.info("Running classical controller off-line to initialise theta_f")
    traj = run_simulation(nominal_cfg)

    coeffs = derive_coefficients(cfg.plant)
    ad = cfg.adaptive
    parts = default_partitions(ad.centers, ad.x2_domain, ad.x3_domain, ad.x4_domain)
    prior = init_from_function(parts, lambda X: true_f(coeffs, (0.0, *X)))

    stride = max(1, len(traj) // OFFLINE_MAX_SAMPLES)
    states = traj.states[::stride]
    samples = np.array([true_f(coeffs, row) for row in states])
    return fit_from_samples(parts, states[:, 1:4], samples, ridge=OFFLINE_RIDGE, prior=prior)


def build_controller(cfg, coeffs):
    """Controller selected by the scenario, built on the nominal coefficients"""
    if cfg.controller == "classical":
        return ClassicalController(coeffs, cfg.classical)

    theta_f = offline_theta(cfg) if cfg.adaptive.init_mode == "offline" else None
    return AdaptiveFuzzyController(cfg.adaptive, coeffs, cfg.dt, theta_f=theta_f)


def _measure(x, previous, dt, mode):
    if mode == "true-state" or previous is None:
        return x
    return np.array([
        x[0],
        backward_difference_estimate(previous[0], x[0], dt),
        x[2],
        backward_difference_estimate(previous[2], x[2], dt),
    ])


def run_simulation(cfg):
    """Simulate one scenario.

    Args:
        cfg (ScenarioConfig): Scenario

    Returns:
        Trajectory: steps+1 samples from t=0 to t_end; identical configs give
            bit-identical trajectories

    Raises:
        ScenarioInvalidError: invalid parameters or schedule
        NotHurwitzError: adaptive controller in solved mode with unstable gains
        SimulationDivergence: non-finite or unbounded state; carries the partial trajectory
    """
    validate_scenario(cfg)
    nominal = derive_coefficients(cfg.plant)
    controller = build_controller(cfg, nominal)

    dt = cfg.dt
    n = cfg.steps
    schedule = cfg.schedule
    stage_reference = cfg.reference if cfg.measurement == "true-state" else None
    traj = Trajectory.allocate(controller.name, n + 1, schedule.targets)
    traj.warnings.extend(controller.warnings)

    logger.info(f"Simulating {controller.name} controller: {n} steps of {dt:g} s")

    x = np.array(cfg.initial_state, dtype=float)
    previous = None
    coeffs = nominal
    active = {}
    filled = 0
    t = 0.0

    try:
        with np.errstate(over='ignore', invalid='ignore'):
            for k in range(n + 1):
                t = k * dt
                multipliers = schedule.multipliers(t)
                if multipliers != active:
                    coeffs = derive_coefficients(apply_schedule(cfg.plant, schedule, t))
                    active = multipliers
                    logger.debug(f"Plant multipliers at t={t:.4f}: {multipliers}")

                ref = reference(t, cfg.reference, order=4)
                sample = controller.command(t, _measure(x, previous, dt, cfg.measurement), ref)
                if not math.isfinite(sample.u):
                    raise SimulationDivergence("non-finite control input", t)

                traj.t[k] = t
                traj.states[k] = x
                traj.u[k] = sample.u
                traj.ym[k] = ref[0]
                traj.e[k] = ref[0] - x[2]
                traj.clamp[k] = 1.0 if sample.clamped else 0.0
                if controller.adaptive:
                    traj.theta_f_norm[k] = np.abs(controller.theta_f).max()
                    traj.theta_g_norm[k] = np.abs(controller.theta_g).max()
                for target, value in multipliers.items():
                    traj.multipliers[target][k] = value
                filled = k + 1

                if k == n:
                    break

                if controller.adaptive:
                    rules = controller.rule_count

                    def augmented_field(tau, s):
                        xs = s[:4]
                        theta_f_dot, theta_g_dot = controller.rates(
                            tau, xs, s[4:4 + rules], s[4 + rules:], sample, stage_reference
                        )
                        return np.concatenate((plant_derivative(coeffs, xs, sample.u), theta_f_dot, theta_g_dot))

                    s = np.concatenate((x, controller.theta_f, controller.theta_g))
                    s = rk4_step(augmented_field, s, t, dt)
                    controller.set_parameters(s[4:4 + rules], s[4 + rules:])
                    x_next = s[:4]
                else:
                    x_next = rk4_step(lambda tau, s: plant_derivative(coeffs, s, sample.u), x, t, dt)

                if np.abs(x_next).max() > DIVERGENCE_LIMIT:
                    raise SimulationDivergence(f"|state| exceeded {DIVERGENCE_LIMIT:g}", t + dt)
                previous = x
                x = x_next
    except SimulationDivergence as e:
        logger.error(f"Divergence in {controller.name} run: {str(e)}")
        e.trajectory = traj.truncated(filled)
        raise

    if controller.adaptive:
        traj.theta_rows = {
            "theta_f": FuzzyApproximator(controller.partitions, controller.theta_f).theta_rows(),
            "theta_g": FuzzyApproximator(controller.partitions, controller.theta_g).theta_rows(),
        }
        if controller.clamp_count:
            logger.warning(f"g_hat floor engaged on {controller.clamp_count} samples")

    logger.info(f"Finished {controller.name} run at t={t:.4f}")
    return traj
