"""Alternating-bias pulse schedules and the simulated measurement loop.

An iteration is M bipolar square-wave cycles (positive pulse, blanking
interval, negative pulse, blanking interval) followed by one four-wire
resistance measurement.  A program strings iterations together with a stop
rule and, for stepped manipulation, interleaves relaxation waits.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import twin
from .errors import DomainError
from .trace import ResistanceTrace
from .twin import Phase

MAINS_SYNC_S = 0.02   # measurement period quantum; metadata only


@dataclass
class IterationSpec:
    """One pulse-train iteration."""

    va: float = 0.85        # pulse amplitude [V]
    m: int = 6              # pulses per iteration
    period: float = 0.200   # square-wave period [s]
    blank: float = 0.100    # blanking interval [s]

    def validate(self):
        if self.va <= 0:
            raise DomainError("pulse amplitude must be positive")
        if self.m < 1:
            raise DomainError("at least one pulse per iteration")
        if self.period <= 0 or self.blank < 0:
            raise DomainError("bad iteration timing")
        return self

    @property
    def pulse_duration(self):
        return self.period / 2.0

    @property
    def duration(self):
        return self.m * (self.period + 2.0 * self.blank)


@dataclass
class MeasurementSpec:
    """Linear I-V sweep used to read out the resistance."""

    v_min: float = -0.013
    v_max: float = +0.013
    points: int = 51
    noise: float = 0.0       # relative current-noise amplitude
    duration: float = 0.5    # [s], mains-synchronized in hardware

    def validate(self):
        if not self.v_min < self.v_max:
            raise DomainError("sweep bounds must satisfy v_min < v_max")
        if self.points < 2:
            raise DomainError("at least two sweep points")
        return self

    def sweep_voltages(self):
        return np.linspace(self.v_min, self.v_max, self.points)


@dataclass
class MaxIterations:
    n: int


@dataclass
class TargetDeltaR:
    fraction: float


@dataclass
class Segment:
    kind: str      # pulse+ | blank | pulse- | measure
    v: float
    dt: float


@dataclass
class Program:
    """A full manipulation experiment (single or stepped)."""

    kind: str = "single"                 # single | stepped
    iteration: IterationSpec = field(default_factory=IterationSpec)
    measurement: MeasurementSpec = field(default_factory=MeasurementSpec)
    stop: object = None                  # exactly one stop rule
    step_dr: float = 0.10                # per-step cumulative target (stepped)
    t_relax: float = 10800.0             # relaxation wait after each stop [s]
    t_probe: float = 60.0                # probe period during relaxation [s]
    max_steps: int = 1

    def validate(self):
        self.iteration.validate()
        self.measurement.validate()
        if self.kind not in ("single", "stepped"):
            raise DomainError(f"unknown program kind {self.kind!r}")
        if self.stop is None:
            raise DomainError("a program needs exactly one stop rule")
        if self.kind == "stepped":
            if self.step_dr <= 0:
                raise DomainError("stepped program needs step_dr > 0")
            if self.max_steps < 1:
                raise DomainError("stepped program needs max_steps >= 1")
        if self.t_relax < 0 or self.t_probe <= 0:
            raise DomainError("bad relaxation timing")
        return self

    def digest(self):
        def enc(obj):
            if hasattr(obj, "__dict__"):
                return {obj.__class__.__name__: obj.__dict__}
            return obj

        blob = json.dumps(self, default=enc, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def build_iteration(spec):
    """Ordered waveform segments for one iteration, measurement slot last."""
    spec.validate()
    segments = []
    for _ in range(spec.m):
        segments.append(Segment("pulse+", +spec.va, spec.pulse_duration))
        segments.append(Segment("blank", 0.0, spec.blank))
        segments.append(Segment("pulse-", -spec.va, spec.pulse_duration))
        segments.append(Segment("blank", 0.0, spec.blank))
    segments.append(Segment("measure", 0.0, -1.0))  # duration set by MeasurementSpec
    return segments


def build_single_program(stop, iteration=None, t_relax=1800.0, t_probe=60.0,
                         measurement=None):
    return Program(kind="single",
                   iteration=iteration or IterationSpec(),
                   measurement=measurement or MeasurementSpec(),
                   stop=stop, t_relax=t_relax, t_probe=t_probe).validate()


def build_stepped_program(step_dr, t_relax, max_steps, iteration=None,
                          t_probe=60.0, measurement=None):
    """Stepped protocol: cumulative targets k*step_dr relative to R(0)."""
    if step_dr <= 0:
        raise DomainError("step_dr must be positive")
    if max_steps < 1:
        raise DomainError("max_steps must be at least 1")
    kind = "stepped" if max_steps > 1 else "single"
    stop = TargetDeltaR(step_dr * max_steps)
    return Program(kind=kind,
                   iteration=iteration or IterationSpec(),
                   measurement=measurement or MeasurementSpec(),
                   stop=stop, step_dr=step_dr, t_relax=t_relax,
                   t_probe=t_probe, max_steps=max_steps).validate()


@dataclass
class MeasurementResult:
    resistance: float
    r_squared: float
    failed: bool = False


def measure_resistance(state, variant, spec, rng):
    """Synthesize an I-V sweep and fit V = R*I through the origin.

    A failed junction reads back its short-circuit resistance, flagged.
    """
    r_true = twin.measured_resistance(state, variant)
    failed = state.phase is Phase.FAILED
    v = spec.sweep_voltages()
    current = v / r_true
    if spec.noise > 0.0:
        current = current * (1.0 + spec.noise * rng.standard_normal(spec.points))
    r_fit = float(np.dot(v, current) / np.dot(current, current))
    resid = v - r_fit * current
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return MeasurementResult(resistance=r_fit, r_squared=r2, failed=failed)


def _record(trace, state, measurement, label=None):
    trace.append(state.clock, measurement.resistance, state.temperature,
                 label if label is not None else state.phase.value)


def _active_label(state):
    return state.phase.value if state.phase in (Phase.DROP, Phase.ACTIVE) else "active"


def run_program(state, variant, program, rng, seed_label=None):
    """Drive a twin through a program, recording every measurement.

    Returns the resistance trace; the twin state is advanced in place.  A
    failure truncates the trace with a terminal failed sample.
    """
    program.validate()
    trace = ResistanceTrace(meta={
        "variant": variant.name,
        "program": program.digest(),
        "seed": "" if seed_label is None else str(seed_label),
        "mains_sync_s": repr(MAINS_SYNC_S),
    })
    r0 = state.r0
    spec = program.measurement
    iteration = program.iteration

    first = measure_resistance(state, variant, spec, rng)
    _record(trace, state, first)
    if first.failed:
        return trace
    last = first

    n_steps = program.max_steps if program.kind == "stepped" else 1

    for step in range(1, n_steps + 1):
        if program.kind == "stepped":
            target = TargetDeltaR(step * program.step_dr)
        else:
            target = program.stop

        iterations_done = 0
        had_active = False
        while True:
            if isinstance(target, MaxIterations):
                if iterations_done >= target.n:
                    break
            else:
                if twin.delta_r(last.resistance, r0) >= target.fraction:
                    break
            # one iteration: M bipolar cycles, then a measurement slot
            for _ in range(iteration.m):
                twin.step_active(state, variant, iteration.va,
                                 iteration.pulse_duration, rng)
                if state.phase is Phase.FAILED:
                    break
                twin.step_hold(state, variant, iteration.blank)
                twin.step_active(state, variant, iteration.va,
                                 iteration.pulse_duration, rng)
                if state.phase is Phase.FAILED:
                    break
                twin.step_hold(state, variant, iteration.blank)
            had_active = True
            if state.phase is Phase.FAILED:
                _record(trace, state,
                        measure_resistance(state, variant, spec, rng))
                return trace
            twin.step_hold(state, variant, spec.duration)
            last = measure_resistance(state, variant, spec, rng)
            _record(trace, state, last, label=_active_label(state))
            iterations_done += 1

        # relaxation window with probe measurements
        if state.phase in (Phase.DROP, Phase.ACTIVE):
            twin.stop_active(state)
        if program.t_relax > 0.0 and state.ledger:
            waited = 0.0
            while waited < program.t_relax - 1e-9:
                chunk = min(program.t_probe, program.t_relax - waited)
                twin.step_relax(state, variant, chunk)
                waited += chunk
                last = measure_resistance(state, variant, spec, rng)
                _record(trace, state, last, label="probe")
        elif not had_active:
            break

    return trace
