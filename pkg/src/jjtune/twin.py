"""Phenomenological digital twin of a single Al/AlOx junction.

The twin tracks the room-temperature-equivalent resistance as

    R(t) = R0 * (1 + A(t) + D(t) + X(t) + G(t))

where A is the accumulated active change (linear+quadratic pulse response),
D the accumulated (negative) onset drops, X the superposed post-manipulation
relaxations and G the idle-phase aging.  Relaxation and aging run on their
own warm clocks: time below the freeze temperature does not advance them,
so a cold spell pauses rather than resets the dynamics.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import ConfigError, DomainError, StateError
from .physics import SimmonsParams, simmons_factor


class Phase(str, Enum):
    IDLE = "idle"
    DROP = "drop"
    ACTIVE = "active"
    RELAX = "relax"
    FAILED = "failed"


class BreakdownStatus(str, Enum):
    SAFE = "safe"
    FAILED = "failed"


@dataclass
class LogGrowth:
    """y(t) = a + b * ln(1 + t/tau)."""

    a: float
    b: float
    tau: float

    def __call__(self, t):
        return self.a + self.b * math.log1p(t / self.tau)


@dataclass
class RelaxationLaw:
    """Time evolution of the total-vs-active slope and of the free offset.

    slope(0) must be 1 and offset(0) must be 0: no relaxation has happened
    at the instant the manipulation stops.
    """

    slope: LogGrowth
    offset: LogGrowth
    t_freeze: float = 150.0   # K; relaxation halts at or below this

    def validate(self):
        if self.slope.a < 1.0:
            raise ConfigError("relaxation slope law must start at >= 1")
        if self.offset.a < 0.0:
            raise ConfigError("relaxation offset law must start at >= 0")
        if self.slope.tau <= 0 or self.offset.tau <= 0:
            raise ConfigError("relaxation time constants must be positive")


@dataclass
class AgingLaw:
    """Idle-phase logarithmic aging; smaller electrodes age faster."""

    c_ref: float = 0.02        # fractional amplitude at the reference width
    tau: float = 172800.0      # [s]
    w_ref: float = 200e-9      # [m]
    exponent: float = 1.0      # size exponent p in (w_ref/width)^p

    def coefficient(self, width):
        return self.c_ref * (self.w_ref / width) ** self.exponent

    def value(self, t, width):
        return self.coefficient(width) * math.log1p(t / self.tau)


@dataclass
class DropModel:
    """Transient resistance drop at the onset of each manipulation step."""

    depth0: float = 0.0        # fractional depth of the first step's drop
    duration0: float = 0.0     # [s]
    growth: float = 0.0        # per-step deepening with accumulated dR_active

    def depth_at(self, dr_active_at_step_start):
        return self.depth0 * (1.0 + self.growth * dr_active_at_step_start)


@dataclass
class FailureModel:
    """Piecewise-constant hazard; failures cluster early in each active phase."""

    early_rate: float = 0.0    # [1/s] during the first early_window seconds
    late_rate: float = 0.0     # [1/s] afterwards
    early_window: float = 360.0


@dataclass
class JunctionVariant:
    """Static per-wafer parameters; see the shipped variants.toml."""

    name: str
    r_w: float                  # mean initial resistance [ohm]
    width: float                # electrode width [m]
    area: float                 # cross-section [m^2]
    r_a: float                  # resistance-area product [ohm m^2]
    p_ox: float                 # oxidation pressure [mbar]
    t_ox: float                 # oxidation time [min]
    d_ox: float                 # oxidation dose (stored metadata, never computed)
    age_days: float             # days since deposition at first measurement
    alpha0: float               # exponential-law prefactor [1/s]
    v0: float                   # characteristic voltage [V]
    beta_table: list            # [(V [V], beta [1/s^2]), ...] sorted by V
    relaxation: RelaxationLaw
    drop: DropModel = field(default_factory=DropModel)
    hazard: FailureModel = field(default_factory=FailureModel)
    aging: AgingLaw = field(default_factory=AgingLaw)
    simmons: SimmonsParams = field(default_factory=SimmonsParams)
    v_break: float = 1.1        # breakdown voltage [V]
    r_short_max: float = 260.0  # failed-junction resistance ceiling [ohm]

    def validate(self):
        if self.r_w <= 0:
            raise ConfigError(f"{self.name}: r_w must be positive")
        if self.v0 <= 0:
            raise ConfigError(f"{self.name}: v0 must be positive")
        if self.v_break <= 0 or self.r_short_max <= 0:
            raise ConfigError(f"{self.name}: breakdown thresholds must be positive")
        if self.area > 0 and self.r_a > 0:
            if abs(self.r_w * self.area / self.r_a - 1.0) > 0.02:
                raise ConfigError(
                    f"{self.name}: r_a inconsistent with r_w*area by more than 2%")
        if not self.beta_table:
            raise ConfigError(f"{self.name}: beta table must not be empty")
        volts = [v for v, _ in self.beta_table]
        if volts != sorted(volts):
            raise ConfigError(f"{self.name}: beta table must be sorted by voltage")
        if self.hazard.early_rate < 0 or self.hazard.late_rate < 0:
            raise ConfigError(f"{self.name}: hazard rates must be non-negative")
        if self.drop.depth0 < 0 or self.drop.duration0 < 0:
            raise ConfigError(f"{self.name}: drop parameters must be non-negative")
        self.relaxation.validate()
        return self


@dataclass
class RelaxationEntry:
    """One stopped manipulation step: its active increment and warm clock."""

    delta: float     # active fractional change accumulated during the step
    elapsed: float   # warm seconds since the step stopped


@dataclass
class JunctionState:
    """Mutable twin state.  Owned by one execution context at a time."""

    r0: float
    temperature: float = 297.0
    phase: Phase = Phase.IDLE
    clock: float = 0.0
    dr_active: float = 0.0          # A: accumulated active fractional change
    dr_drop: float = 0.0            # D: accumulated drop contribution (<= 0)
    aging_elapsed: float = 0.0      # warm idle seconds
    ledger: list = field(default_factory=list)   # RelaxationEntry items
    step_index: int = 0             # completed manipulation steps
    r_failed: float = None          # short-circuit resistance once failed
    # transients of the step in progress
    active_elapsed: float = 0.0     # pulse-on seconds driving the quadratic law
    phase_elapsed: float = 0.0      # seconds since this active phase began
    drop_target: float = 0.0        # this step's drop, as fraction of r0
    drop_done: float = 0.0          # seconds progressed through the drop window
    committed_active: float = 0.0   # dr_active already booked into the ledger
    hazard_accum: float = 0.0
    hazard_threshold: float = None


def new_state(variant, r0=None, temperature=297.0):
    """Fresh twin state; r0 defaults to the variant's mean wafer resistance."""
    return JunctionState(r0=float(r0 if r0 is not None else variant.r_w),
                         temperature=temperature)


def delta_r(r, r0):
    """Fractional resistance increase R/R0 - 1."""
    if r0 <= 0:
        raise DomainError("reference resistance must be positive")
    return r / r0 - 1.0


def alpha_of_v(variant, v):
    """Exponential voltage law for the linear rate: alpha0 * exp(V/V0)."""
    if v < 0:
        raise DomainError("voltage must be non-negative")
    return variant.alpha0 * math.exp(v / variant.v0)


def beta_of_v(variant, v):
    """Quadratic-term coefficient, interpolated from the per-voltage table.

    Linear between knots, clamped at the table endpoints so a sign-changing
    quantity is never extrapolated.
    """
    table = variant.beta_table
    if not table:
        raise ConfigError(f"{variant.name}: beta table must not be empty")
    if v <= table[0][0]:
        return table[0][1]
    if v >= table[-1][0]:
        return table[-1][1]
    for (v_lo, b_lo), (v_hi, b_hi) in zip(table, table[1:]):
        if v_lo <= v <= v_hi:
            w = (v - v_lo) / (v_hi - v_lo)
            return b_lo + w * (b_hi - b_lo)
    raise AssertionError("unreachable")


def crossover_time(alpha, beta):
    """Time at which the quadratic term overtakes the linear one.

    Only defined for decelerating (negative beta) dynamics; returns None as
    the no-crossover signal otherwise.
    """
    if beta >= 0:
        return None
    return alpha / abs(beta)


def relaxation_total(state, variant):
    """Superposed relaxation contribution, fraction of r0.

    Every stopped step keeps contributing on its own warm clock:
    (slope(t') - 1) * delta + offset(t').
    """
    law = variant.relaxation
    total = 0.0
    for entry in state.ledger:
        total += ((law.slope(entry.elapsed) - 1.0) * entry.delta
                  + law.offset(entry.elapsed))
    return total


def aging_total(state, variant):
    """Idle-phase aging contribution, fraction of r0."""
    if state.aging_elapsed <= 0.0:
        return 0.0
    return variant.aging.value(state.aging_elapsed, variant.width)


def true_resistance(state, variant):
    """Room-temperature-equivalent resistance of the twin."""
    if state.phase is Phase.FAILED:
        return state.r_failed
    return state.r0 * (1.0 + state.dr_active + state.dr_drop
                       + relaxation_total(state, variant)
                       + aging_total(state, variant))


def measured_resistance(state, variant):
    """Resistance as an ohmmeter would read it at the current temperature.

    Below the reference temperature the junction reads high by the
    conductance correction factor (negative temperature coefficient).
    """
    r_rt = true_resistance(state, variant)
    if state.phase is Phase.FAILED:
        return r_rt
    if state.temperature < variant.simmons.tref:
        return r_rt * simmons_factor(state.temperature, variant.simmons)
    return r_rt


def check_breakdown(state, variant, v):
    """Failed iff the pulse reaches breakdown or the junction already shorted."""
    if state.phase is Phase.FAILED:
        return BreakdownStatus.FAILED
    if v >= variant.v_break:
        return BreakdownStatus.FAILED
    if true_resistance(state, variant) <= variant.r_short_max:
        return BreakdownStatus.FAILED
    return BreakdownStatus.SAFE


def _advance(state, variant, dt):
    """Advance wall clock; warm time also advances the relaxation clocks."""
    state.clock += dt
    if state.temperature > variant.relaxation.t_freeze:
        for entry in state.ledger:
            entry.elapsed += dt


def _fail(state, variant, rng):
    state.phase = Phase.FAILED
    if rng is not None:
        state.r_failed = float(rng.uniform(0.02, 1.0)) * variant.r_short_max
    else:
        state.r_failed = variant.r_short_max


def _accrue_hazard(state, variant, dt, rng):
    """Accumulate failure hazard over dt of active-phase time."""
    hz = variant.hazard
    if hz.early_rate == 0.0 and hz.late_rate == 0.0:
        state.phase_elapsed += dt
        return
    if rng is None:
        raise StateError("an rng is required when hazard rates are nonzero")
    early_left = max(0.0, hz.early_window - state.phase_elapsed)
    t_early = min(dt, early_left)
    state.hazard_accum += hz.early_rate * t_early + hz.late_rate * (dt - t_early)
    state.phase_elapsed += dt
    if state.hazard_threshold is None:
        state.hazard_threshold = float(rng.exponential(1.0))
    if state.hazard_accum >= state.hazard_threshold:
        _fail(state, variant, rng)


def step_hold(state, variant, dt):
    """Let time pass with no electrical drive (blanking, measurement slots).

    Active manipulation does not accrue, but prior relaxations keep running
    on their warm clocks.
    """
    if dt < 0:
        raise DomainError("dt must be non-negative")
    if state.phase is Phase.FAILED:
        raise StateError("junction has failed")
    _advance(state, variant, dt)
    return state


def step_active(state, variant, v, dt, rng=None):
    """Drive the junction with pulse amplitude v for dt seconds of pulse time.

    Entering from Idle or Relax begins a new manipulation step: the onset
    drop trajectory plays out first (linear descent over its window), then
    the quadratic-in-time law resumes from the dropped value.  Failure
    hazard accrues throughout; a pulse at or above the breakdown voltage
    fails the junction immediately.
    """
    if dt < 0:
        raise DomainError("dt must be non-negative")
    if state.phase is Phase.FAILED:
        raise StateError("junction has failed")
    if v >= variant.v_break:
        _fail(state, variant, rng)
        return state
    if dt == 0.0:
        return state

    if state.phase not in (Phase.DROP, Phase.ACTIVE):
        # new manipulation step
        state.step_index += 1
        state.active_elapsed = 0.0
        state.phase_elapsed = 0.0
        depth = variant.drop.depth_at(state.dr_active)
        if depth > 0.0 and variant.drop.duration0 > 0.0:
            scale = true_resistance(state, variant) / state.r0
            state.drop_target = depth * scale
            state.drop_done = 0.0
            state.phase = Phase.DROP
        else:
            state.phase = Phase.ACTIVE

    remaining = dt
    while remaining > 0.0 and state.phase is not Phase.FAILED:
        if state.phase is Phase.DROP:
            window_left = variant.drop.duration0 - state.drop_done
            step = min(remaining, window_left)
            state.dr_drop -= state.drop_target * (step / variant.drop.duration0)
            state.drop_done += step
            _advance(state, variant, step)
            _accrue_hazard(state, variant, step, rng)
            remaining -= step
            if state.phase is not Phase.FAILED and window_left - step <= 1e-12:
                state.phase = Phase.ACTIVE
        else:
            a = alpha_of_v(variant, v)
            b = beta_of_v(variant, v)
            ta = state.active_elapsed
            state.dr_active += a * remaining + b * (2.0 * ta * remaining
                                                    + remaining * remaining)
            state.active_elapsed += remaining
            _advance(state, variant, remaining)
            _accrue_hazard(state, variant, remaining, rng)
            remaining = 0.0

    if (state.phase is not Phase.FAILED
            and true_resistance(state, variant) <= variant.r_short_max):
        _fail(state, variant, rng)
    return state


def stop_active(state):
    """Book the step in progress into the relaxation ledger."""
    if state.phase not in (Phase.DROP, Phase.ACTIVE):
        raise StateError(f"no active step to stop in phase {state.phase.value}")
    delta = state.dr_active - state.committed_active
    if delta > 0.0:
        state.ledger.append(RelaxationEntry(delta=delta, elapsed=0.0))
        state.committed_active = state.dr_active
    state.phase = Phase.RELAX
    return state


def step_relax(state, variant, dt):
    """Let the junction relax for dt seconds.

    Stops the active step first if one is in progress.  Below the freeze
    temperature the warm clocks do not advance, so the resistance holds.
    """
    if dt < 0:
        raise DomainError("dt must be non-negative")
    if state.phase is Phase.FAILED:
        raise StateError("junction has failed")
    if state.phase in (Phase.DROP, Phase.ACTIVE):
        stop_active(state)
    elif not state.ledger:
        raise StateError("nothing to relax: no manipulation has been stopped")
    state.phase = Phase.RELAX
    _advance(state, variant, dt)
    return state


def step_age(state, variant, dt):
    """Advance idle-phase aging; only meaningful before any manipulation."""
    if dt < 0:
        raise DomainError("dt must be non-negative")
    if state.phase is not Phase.IDLE:
        raise StateError(f"aging applies in the idle phase, not {state.phase.value}")
    if state.temperature > variant.relaxation.t_freeze:
        state.aging_elapsed += dt
    _advance(state, variant, dt)
    return state


def apply_temperature(state, temperature):
    """Set the junction temperature; gates relaxation/aging from now on."""
    if temperature < 0:
        raise DomainError("temperature must be non-negative")
    state.temperature = temperature
    return state
