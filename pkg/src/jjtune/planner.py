"""Tuning-plan synthesis: invert the models from a frequency target.

Relaxation accounting evaluates the slope/offset laws at an explicit
settling horizon (default 30 min); the laws keep growing for days, so the
horizon is a reported choice, not a hidden constant.  Frequency targets
above the current frequency are rejected: the method only increases
resistance.
"""

import math
import warnings
from dataclasses import dataclass, field

from . import physics, protocol, twin
from .errors import DomainError, InfeasibleError
from .physics import GAP_AL_EV, RN_RATIO, T_COLD

DEFAULT_OFFSET_SIGMA = 0.0019
DEFAULT_MAX_TOTAL_DR = 2.70
DEFAULT_SETTLE_S = 1800.0
DEFAULT_TIME_BUDGET_S = 300.0
DEFAULT_MARGIN_V = 0.1


@dataclass
class TuningTarget:
    f_target: float                  # [Hz]
    ec: float                        # charging energy [Hz]
    gap_ev: float = GAP_AL_EV
    ratio: float = RN_RATIO
    temperature: float = T_COLD      # qubit operating temperature [K]
    tolerance: float = 1e6           # acceptable |f error| [Hz]

    def validate(self):
        if self.f_target <= 0:
            raise DomainError("target frequency must be positive")
        if self.tolerance <= 0:
            raise DomainError("tolerance must be positive")
        return self


@dataclass
class UncertaintyBudget:
    offset_sigma: float = DEFAULT_OFFSET_SIGMA   # fraction of R(0), 1 sigma
    slope_sigma: float = 0.0                     # dimensionless, 1 sigma
    f_sigma: float = 0.0                         # propagated width [Hz]


@dataclass
class PlanStep:
    va: float                 # pulse amplitude [V]
    dr_active: float          # active stop target for this step [fraction]
    t_relax: float            # relaxation wait after the stop [s]
    duration: float           # expected active time [s]
    dr_total_target: float = 0.0   # cumulative total-dR stop level
    clamped: bool = False     # amplitude was clamped to v_break - margin


@dataclass
class TuningPlan:
    steps: list
    predicted_total_dr: float
    predicted_f: float
    budget: UncertaintyBudget
    safety_margin: float               # v_break - max amplitude [V]
    target: TuningTarget = None
    r0: float = 0.0
    settle_horizon: float = DEFAULT_SETTLE_S
    step_dr: float = 0.10
    time_budget: float = DEFAULT_TIME_BUDGET_S
    margin: float = DEFAULT_MARGIN_V
    provenance: str = ""               # where the relaxation calibration came from

    @property
    def feasible(self):
        return all(s.va >= 0 for s in self.steps)


@dataclass
class AmplitudeChoice:
    va: float
    duration: float
    clamped: bool = False
    noop: bool = False


@dataclass
class ClosedLoopOutcome:
    achieved_f: float
    target_f: float
    residual: float
    steps_executed: int
    failed: bool
    final_r: float
    traces: list = field(default_factory=list)


def _solve_resistance_for_f(f_target, target, r_lo, r_hi):
    """Bisection on the strictly decreasing f01(R)."""
    def f(r):
        return physics.f01_from_resistance(r, target.ec, target.gap_ev,
                                           target.temperature, target.ratio)
    lo, hi = r_lo, r_hi
    f_lo, f_hi = f(lo), f(hi)
    if not (f_hi <= f_target <= f_lo):
        raise InfeasibleError(
            f"target {f_target/1e9:.4f} GHz outside [{f_hi/1e9:.4f}, "
            f"{f_lo/1e9:.4f}] GHz reachable bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > f_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9 * hi:
            break
    return 0.5 * (lo + hi)


def required_total_dr(r0, target):
    """Total fractional resistance increase that lands on the target frequency."""
    target.validate()
    f_now = physics.f01_from_resistance(r0, target.ec, target.gap_ev,
                                        target.temperature, target.ratio)
    if abs(target.f_target - f_now) <= 1e-3:
        return 0.0
    if target.f_target > f_now:
        raise InfeasibleError(
            f"target {target.f_target/1e9:.4f} GHz is above the current "
            f"{f_now/1e9:.4f} GHz: tuning only lowers the frequency")
    r_hi = r0
    while physics.f01_from_resistance(r_hi, target.ec, target.gap_ev,
                                      target.temperature,
                                      target.ratio) > target.f_target:
        r_hi *= 2.0
        if r_hi > 1e9:
            raise InfeasibleError("target frequency unreachable below 1 Gohm")
    r_t = _solve_resistance_for_f(target.f_target, target, r0, r_hi)
    return r_t / r0 - 1.0


def split_active_target(dr_total, slope, offset):
    """Active manipulation needed so that relaxation completes dr_total."""
    if slope < 1.0:
        raise DomainError("relaxation slope must be >= 1")
    if dr_total < 0:
        raise DomainError("total demand must be non-negative")
    if dr_total < offset:
        warnings.warn("relaxation offset alone overshoots the demand; "
                      "returning zero active manipulation", stacklevel=2)
        return 0.0
    return (dr_total - offset) / slope


def _rising_crossing(a, b, dr):
    """Smallest positive t with a*t + b*t^2 = dr, on the rising branch.

    Demands at the quadratic peak make the discriminant vanish; roundoff
    slightly below zero is treated as the peak itself.
    """
    if b == 0.0:
        return dr / a
    disc = a * a + 4.0 * b * dr
    if disc < 0:
        if disc < -1e-9 * a * a:
            return None
        disc = 0.0
    return (2.0 * dr) / (a + math.sqrt(disc))


def _best_within(variant, va, time_budget):
    """Largest resistance change reachable at va inside the time budget."""
    a = twin.alpha_of_v(variant, va)
    b = twin.beta_of_v(variant, va)
    if b < 0:
        t_peak = a / (2.0 * abs(b))
        t_star = min(t_peak, time_budget)
    else:
        t_star = time_budget
    return a * t_star + b * t_star * t_star


def choose_amplitude(variant, dr_active, time_budget, margin=DEFAULT_MARGIN_V):
    """Smallest pulse amplitude that reaches dr_active within the budget.

    The decelerating quadratic term caps what any amplitude can deliver, so
    the usable drive time is the rising branch only.  Amplitudes are
    clamped to v_break - margin; a clamped choice stretches the duration
    past the budget instead (flagged), and the demand is infeasible when
    even the clamped amplitude's peak falls short.
    """
    if time_budget <= 0:
        raise DomainError("time budget must be positive")
    if margin < 0:
        raise DomainError("margin must be non-negative")
    if dr_active <= 0:
        return AmplitudeChoice(va=0.0, duration=0.0, noop=True)
    va_max = variant.v_break - margin
    if va_max <= 0:
        raise InfeasibleError("no headroom below the breakdown voltage")

    if _best_within(variant, va_max, time_budget) >= dr_active:
        # bisect for the smallest sufficient amplitude
        lo, hi = 0.0, va_max
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _best_within(variant, mid, time_budget) >= dr_active:
                hi = mid
            else:
                lo = mid
        va = hi
        duration = _rising_crossing(twin.alpha_of_v(variant, va),
                                    twin.beta_of_v(variant, va), dr_active)
        return AmplitudeChoice(va=va, duration=min(duration, time_budget))

    # clamp and stretch the duration instead
    va = va_max
    a = twin.alpha_of_v(variant, va)
    b = twin.beta_of_v(variant, va)
    if b < 0 and a * a < 4.0 * abs(b) * dr_active:
        raise InfeasibleError(
            f"demand {dr_active:.4f} unreachable at {va:.3f} V: the "
            f"quadratic law peaks at {a*a/(4*abs(b)):.4f}")
    return AmplitudeChoice(va=va, duration=_rising_crossing(a, b, dr_active),
                           clamped=True)


def plan_steps(r0, target, variant, step_dr=0.10, t_relax=10800.0,
               settle_horizon=DEFAULT_SETTLE_S,
               time_budget=DEFAULT_TIME_BUDGET_S, margin=DEFAULT_MARGIN_V,
               max_total_dr=DEFAULT_MAX_TOTAL_DR,
               budget=None, provenance=None):
    """Split a frequency demand into stepped manipulation with waits.

    Steps carry cumulative total-dR stop levels k*step_dr (the stepped
    protocol's rule); the active part of each step is the split estimate,
    so relaxation between steps does part of the work.  Raises
    InfeasibleError with a partial plan when the demand exceeds the
    configured maximum cumulative resistance change.
    """
    if step_dr <= 0:
        raise DomainError("step_dr must be positive")
    demand = required_total_dr(r0, target)
    capped = min(demand, max_total_dr)
    law = variant.relaxation
    slope_w = law.slope(t_relax)
    offset_w = law.offset(t_relax)

    # planning timeline assumes the default pulse schedule
    it = protocol.IterationSpec()
    pulse_on = it.m * it.period
    wall_per_iter = it.duration + protocol.MeasurementSpec().duration

    entries = []       # (stop_time, delta): superposed relaxation bookkeeping

    def relax_at(t):
        total = 0.0
        for stop, delta in entries:
            age = t - stop
            if age > 0:
                total += (law.slope(age) - 1.0) * delta + law.offset(age)
        return total

    def active_wall(delta, choice):
        if delta <= 0 or choice.duration <= 0:
            return 0.0
        return math.ceil(choice.duration / pulse_on) * wall_per_iter

    steps = []
    if capped > 0:
        t_now = 0.0
        active_total = 0.0
        k = 0
        while k < 10000:
            k += 1
            # trial full step on the k*step_dr grid (two passes: the stop
            # time depends weakly on the step size)
            delta = step_dr
            for _pass in range(2):
                choice = choose_amplitude(variant, max(delta, 1e-9),
                                          time_budget, margin)
                t_stop = t_now + active_wall(delta, choice)
                delta = min(max(k * step_dr - active_total - relax_at(t_stop),
                                0.0), step_dr)
            t_measure = t_stop + t_relax
            settled_full = (active_total + delta + relax_at(t_measure)
                            + (slope_w - 1.0) * delta + offset_w)
            final = settled_full >= capped - 1e-12
            if final:
                # back the last stop off by this step's own settling
                for _pass in range(2):
                    delta = (capped - active_total - relax_at(t_measure)
                             - offset_w) / slope_w
                    delta = min(max(delta, 0.0), step_dr)
                    choice = choose_amplitude(variant, max(delta, 1e-9),
                                              time_budget, margin)
                    t_stop = t_now + active_wall(delta, choice)
                    t_measure = t_stop + t_relax
            choice = choose_amplitude(variant, delta, time_budget, margin)
            steps.append(PlanStep(
                va=choice.va, dr_active=delta, t_relax=t_relax,
                duration=choice.duration,
                dr_total_target=active_total + delta + relax_at(t_stop),
                clamped=choice.clamped))
            entries.append((t_stop, delta))
            active_total += delta
            t_now = t_measure
            if final:
                break

    predicted = capped
    predicted_f = physics.f01_from_resistance(
        r0 * (1.0 + predicted), target.ec, target.gap_ev,
        target.temperature, target.ratio)
    plan = TuningPlan(
        steps=steps, predicted_total_dr=predicted, predicted_f=predicted_f,
        budget=budget or UncertaintyBudget(),
        safety_margin=variant.v_break - max((s.va for s in steps), default=0.0),
        target=target, r0=r0, settle_horizon=settle_horizon, step_dr=step_dr,
        time_budget=time_budget, margin=margin,
        provenance=provenance or f"defaults:{variant.name}")
    predict_frequency_uncertainty(plan, r0, target)
    if demand > max_total_dr:
        raise InfeasibleError(
            f"demand {demand:.3f} exceeds the configured maximum cumulative "
            f"resistance change {max_total_dr:.3f}", partial_plan=plan)
    return plan


def predict_frequency_uncertainty(plan, r0, target):
    """Two-sided propagation of the relaxation calibration errors.

    Each step contributes an independent offset error and a slope error
    scaled by its active amount; the resulting relative resistance band is
    pushed through the frequency conversion.
    """
    budget = plan.budget
    n = len(plan.steps)
    var = n * budget.offset_sigma ** 2
    var += sum((budget.slope_sigma * s.dr_active) ** 2 for s in plan.steps)
    sigma_dr = math.sqrt(var)
    if sigma_dr == 0.0:
        budget.f_sigma = 0.0
        return 0.0
    r_final = r0 * (1.0 + plan.predicted_total_dr)
    rel = sigma_dr / (1.0 + plan.predicted_total_dr)
    budget.f_sigma = physics.frequency_precision_bound(
        r_final, rel, target.ec, target.gap_ev, target.temperature,
        target.ratio)
    return budget.f_sigma


def closed_loop_execute(state, variant, plan, rng, *, replan=True,
                        calibration=None, t_probe=60.0, noise=0.0,
                        iteration=None, max_steps=200):
    """Execute a plan on a twin, re-measuring and re-planning every step.

    ``calibration`` is the variant the controller believes in (defaults to
    the true one); pass a miscalibrated variant to study open- versus
    closed-loop sensitivity.  With ``replan`` off the precomputed plan runs
    open loop: step stop targets come from the original split instead of
    the measured state.  Returns the outcome report; the twin state is
    advanced in place.
    """
    target = plan.target
    calib = calibration or variant
    r0 = state.r0
    law = calib.relaxation
    r_target = r0 * (1.0 + required_total_dr(r0, target))
    traces = []
    steps_executed = 0
    failed = False

    def spec():
        return protocol.MeasurementSpec(noise=noise)

    def measure():
        return protocol.measure_resistance(state, variant, spec(), rng)

    base_it = iteration or protocol.IterationSpec()
    t_relax_step = max(plan.steps[0].t_relax if plan.steps else 0.0,
                       plan.settle_horizon)
    # law values at the end-of-window measurement moment
    slope_w = law.slope(t_relax_step)
    offset_w = law.offset(t_relax_step)
    pulse_on_per_iter = base_it.m * base_it.period
    wall_per_iter = base_it.duration + protocol.MeasurementSpec().duration

    # per-step active cap keeping each step's total increment near step_dr
    if plan.step_dr > offset_w:
        step_cap = (plan.step_dr - offset_w) / slope_w
    else:
        step_cap = plan.step_dr

    if replan:
        # the controller mirrors its own commanded steps (stop time, delta)
        # so it can predict how much the old relaxations will still grow
        ctrl_ledger = []

        def tail_growth(window):
            total = 0.0
            now_clock = state.clock
            for stop_clock, delta in ctrl_ledger:
                age = max(now_clock - stop_clock, 0.0)
                total += ((law.slope(age + window) - law.slope(age)) * delta
                          + law.offset(age + window) - law.offset(age))
            return total

        for _ in range(max_steps):
            now = measure()
            if now.failed:
                failed = True
                break
            remaining = (r_target - now.resistance) / r0
            if remaining <= 1e-6:
                break
            # two passes: the window length needed for the tail estimate
            # depends (weakly) on the step size
            growth = tail_growth(t_relax_step)
            delta = 0.0
            for _pass in range(2):
                room = remaining - offset_w - growth
                if room <= 0:
                    delta = 0.0
                    break
                delta = min(room / slope_w, step_cap)
                choice = choose_amplitude(calib, delta, plan.time_budget,
                                          plan.margin)
                n_iter = max(math.ceil(choice.duration / pulse_on_per_iter), 1)
                window = n_iter * wall_per_iter + t_relax_step
                growth = tail_growth(window)
            if delta <= 1e-6:
                # a new step would overshoot by its relaxation offset; let
                # the running relaxations close the gap, probing until the
                # target is crossed or the tails stall
                wait_gain = tail_growth(t_relax_step)
                if wait_gain > 0.05 * remaining and state.ledger:
                    waited = 0.0
                    while waited < t_relax_step - 1e-9:
                        twin.step_relax(state, variant, t_probe)
                        waited += t_probe
                        probe = measure()
                        remaining = (r_target - probe.resistance) / r0
                        if remaining <= 1e-6:
                            break
                    continue
                if remaining > 0.5 * (offset_w + wait_gain):
                    delta = 1e-3  # minimal trim: overshoot beats undershoot
                else:
                    break
            choice = choose_amplitude(calib, delta, plan.time_budget,
                                      plan.margin)
            stop_total = (now.resistance / r0 - 1.0) + delta
            it = protocol.IterationSpec(va=choice.va, m=base_it.m,
                                        period=base_it.period,
                                        blank=base_it.blank)
            prog = protocol.build_single_program(
                protocol.TargetDeltaR(stop_total), iteration=it,
                t_relax=t_relax_step, t_probe=t_probe, measurement=spec())
            traces.append(protocol.run_program(state, variant, prog, rng))
            steps_executed += 1
            if state.phase is twin.Phase.FAILED:
                failed = True
                break
            ctrl_ledger.append((state.clock - t_relax_step, delta))
    else:
        # open loop: fire the planned pulse schedule as-is; calibration
        # errors land directly in the outcome
        for step in plan.steps:
            if step.va <= 0.0 or step.duration <= 0.0:
                # zero-active step: the plan expects relaxation to cover it
                if state.ledger:
                    waited = 0.0
                    while waited < t_relax_step - 1e-9:
                        twin.step_relax(state, variant, t_probe)
                        waited += t_probe
                    steps_executed += 1
                continue
            n_iter = max(math.ceil(step.duration / pulse_on_per_iter), 1)
            it = protocol.IterationSpec(va=step.va, m=base_it.m,
                                        period=base_it.period,
                                        blank=base_it.blank)
            prog = protocol.build_single_program(
                protocol.MaxIterations(n_iter), iteration=it,
                t_relax=t_relax_step, t_probe=t_probe, measurement=spec())
            traces.append(protocol.run_program(state, variant, prog, rng))
            steps_executed += 1
            if state.phase is twin.Phase.FAILED:
                failed = True
                break

    final = measure()
    if final.failed:
        failed = True
        achieved_f = float("nan")
    else:
        achieved_f = physics.f01_from_resistance(
            final.resistance, target.ec, target.gap_ev, target.temperature,
            target.ratio)
    return ClosedLoopOutcome(
        achieved_f=achieved_f, target_f=target.f_target,
        residual=achieved_f - target.f_target, steps_executed=steps_executed,
        failed=failed, final_r=final.resistance, traces=traces)
