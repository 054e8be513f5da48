"""Junction resistance <-> transmon spectrum conversions.

Energies are handled as frequencies (E/h, in Hz) throughout so that no
Planck-constant bookkeeping leaks into call sites.  The superconducting gap
is accepted in eV at the interface, matching how it is usually quoted.
"""

import math
from dataclasses import dataclass

from .errors import ConvergenceError, DomainError


@dataclass(frozen=True)
class Constants:
    """2019 exact SI values."""

    e: float = 1.602176634e-19       # elementary charge [C]
    h: float = 6.62607015e-34        # Planck constant [J s]
    kB: float = 1.380649e-23         # Boltzmann constant [J/K]
    alpha_bcs: float = 3.5           # ideal gap ratio, dimensionless

    @property
    def hbar(self):
        return self.h / (2.0 * math.pi)

    @property
    def phi0(self):
        # magnetic flux quantum h/(2e) [Wb]
        return self.h / (2.0 * self.e)


CONSTANTS = Constants()

# Defaults used across the toolkit (aluminium junctions, dilution fridge).
GAP_AL_EV = 174.3e-6       # measured superconducting gap [eV]
RN_RATIO = 1.1385          # room-temperature R -> normal-state R_N factor
T_COLD = 0.010             # qubit operating temperature [K]
TREF = 297.0               # reference room temperature [K]

# Brackets for the 2-D spectrum inverse solve.
EC_BRACKET = (50e6, 500e6)         # [Hz]
R_BRACKET = (1e3, 100e3)           # [ohm]
TRANSMON_REGIME_MIN_RATIO = 20.0   # EJ/EC below this is flagged


@dataclass
class TransmonParams:
    """Derived transmon spectrum quantities for a given (EJ, EC) pair."""

    ej: float                 # Josephson energy [Hz]
    ec: float                 # charging energy [Hz]
    xi: float                 # sqrt(2 EC / EJ)
    f01: float                # 0-1 transition frequency [Hz]
    eta: float                # anharmonicity eta/2pi [Hz]
    in_transmon_regime: bool  # EJ/EC >= 20


@dataclass
class JunctionElectrical:
    """Electrical character of one junction at a given temperature."""

    r: float                  # room-temperature resistance [ohm]
    ratio: float = RN_RATIO
    gap_ev: float = GAP_AL_EV
    temperature: float = T_COLD

    def __post_init__(self):
        if self.r <= 0:
            raise DomainError(f"resistance must be positive, got {self.r}")
        if self.gap_ev <= 0:
            raise DomainError("superconducting gap must be positive")

    @property
    def rn(self):
        return self.r * self.ratio

    @property
    def ic(self):
        return critical_current(self.rn, self.gap_ev, self.temperature)

    @property
    def ej(self):
        return josephson_energy(self.ic)


@dataclass
class SimmonsParams:
    """Quadratic-in-T tunneling conductance model, G normalized at g0."""

    g0: float = 0.8791        # characteristic conductance, dimensionless
    t0: float = 779.5         # characteristic temperature [K]
    tref: float = TREF        # reference room temperature [K]

    def __post_init__(self):
        if self.g0 <= 0 or self.t0 <= 0:
            raise DomainError("Simmons parameters must be positive")

    @property
    def rn_ratio(self):
        """Implied R/R_N conversion, the inverse zero-temperature conductance."""
        return 1.0 / self.g0


@dataclass
class TransmonSolution:
    """Result of the 2-D spectrum inverse solve."""

    r: float
    ec: float
    ej: float
    f01_residual: float
    eta_residual: float
    iterations: int


def josephson_energy(ic):
    """Josephson energy (Hz) from critical current: (hbar*IC/2e)/h = IC/(4 pi e)."""
    if ic < 0:
        raise DomainError(f"critical current must be non-negative, got {ic}")
    return ic / (4.0 * math.pi * CONSTANTS.e)


def critical_current(rn, gap_ev, temperature):
    """Ambegaokar-Baratoff critical current from normal-state resistance.

    The tanh thermal factor is evaluated as its T->0 limit of 1 when the
    temperature is zero, so no division is performed there.
    """
    if rn <= 0:
        raise DomainError(f"normal-state resistance must be positive, got {rn}")
    if gap_ev <= 0:
        raise DomainError("superconducting gap must be positive")
    if temperature < 0:
        raise DomainError("temperature must be non-negative")
    gap_j = gap_ev * CONSTANTS.e
    if temperature == 0.0:
        thermal = 1.0
    else:
        thermal = math.tanh(gap_j / (2.0 * CONSTANTS.kB * temperature))
    return math.pi * gap_j / (2.0 * CONSTANTS.e * rn) * thermal


def f01_from_energies(ej, ec):
    """Transition frequency of the transmon, 4th-order-corrected plasma formula."""
    if ej <= 0:
        raise DomainError("EJ must be positive")
    if ec < 0:
        raise DomainError("EC must be non-negative")
    if ec == 0.0:
        return 0.0
    xi = math.sqrt(2.0 * ec / ej)
    return math.sqrt(8.0 * ej * ec) - ec * (1.0 + xi / 4.0 + 21.0 * xi * xi / 128.0)


def anharmonicity_from_energies(ec, ej):
    """Anharmonicity eta/2pi (Hz, negative) from the charging-energy series."""
    if ej <= 0 or ec <= 0:
        raise DomainError("EJ and EC must be positive")
    xi = math.sqrt(2.0 * ec / ej)
    series = (1.0
              + 9.0 / 16.0 * xi
              + 81.0 / 128.0 * xi ** 2
              + 3645.0 / 4096.0 * xi ** 3
              + 46899.0 / 32768.0 * xi ** 4)
    return -ec * series


def transmon_params(ej, ec):
    """Bundle the derived spectrum quantities, flagging EJ/EC < 20.

    The low-ratio flag is diagnostic only; heavily tuned junctions sit near
    EJ/EC ~ 14 and must still evaluate.
    """
    xi = math.sqrt(2.0 * ec / ej)
    return TransmonParams(
        ej=ej, ec=ec, xi=xi,
        f01=f01_from_energies(ej, ec),
        eta=anharmonicity_from_energies(ec, ej),
        in_transmon_regime=(ej / ec) >= TRANSMON_REGIME_MIN_RATIO,
    )


def f01_from_resistance(r, ec, gap_ev=GAP_AL_EV, temperature=T_COLD, ratio=RN_RATIO):
    """Qubit frequency from room-temperature resistance.

    Composes ratio -> R_N -> critical current -> EJ -> f01.
    """
    if r <= 0:
        raise DomainError(f"resistance must be positive, got {r}")
    ej = josephson_energy(critical_current(r * ratio, gap_ev, temperature))
    return f01_from_energies(ej, ec)


def ej_from_resistance(r, gap_ev=GAP_AL_EV, temperature=T_COLD, ratio=RN_RATIO):
    """Josephson energy (Hz) from room-temperature resistance."""
    if r <= 0:
        raise DomainError(f"resistance must be positive, got {r}")
    return josephson_energy(critical_current(r * ratio, gap_ev, temperature))


def resistance_from_ej(ej, gap_ev=GAP_AL_EV, temperature=T_COLD, ratio=RN_RATIO):
    """Room-temperature resistance giving the requested Josephson energy."""
    if ej <= 0:
        raise DomainError("EJ must be positive")
    ic = ej * 4.0 * math.pi * CONSTANTS.e
    gap_j = gap_ev * CONSTANTS.e
    if temperature == 0.0:
        thermal = 1.0
    else:
        thermal = math.tanh(gap_j / (2.0 * CONSTANTS.kB * temperature))
    rn = math.pi * gap_j * thermal / (2.0 * CONSTANTS.e * ic)
    return rn / ratio


def critical_temperature(gap_ev):
    """BCS critical temperature 2*gap/(alpha_BCS*kB) for the given gap."""
    if gap_ev < 0:
        raise DomainError("gap must be non-negative")
    return 2.0 * gap_ev * CONSTANTS.e / (CONSTANTS.alpha_bcs * CONSTANTS.kB)


def thermal_voltage(temperature):
    """kB*T/e."""
    if temperature < 0:
        raise DomainError("temperature must be non-negative")
    return CONSTANTS.kB * temperature / CONSTANTS.e


def simmons_conductance(temperature, params):
    """Normalized junction conductance G(T) = G0*(1 + (T/T0)^2)."""
    if temperature < 0:
        raise DomainError("temperature must be non-negative")
    return params.g0 * (1.0 + (temperature / params.t0) ** 2)


def simmons_factor(temperature, params):
    """Multiplier taking a conductance at T to its room-temperature equivalent."""
    if temperature < 0:
        raise DomainError("temperature must be non-negative")
    return ((1.0 + (params.tref / params.t0) ** 2)
            / (1.0 + (temperature / params.t0) ** 2))


def room_temperature_equivalent(g_cryo, temperature, params):
    """Convert an in-situ cryogenic conductance to its room-temperature value."""
    if g_cryo <= 0:
        raise DomainError("conductance must be positive")
    return g_cryo * simmons_factor(temperature, params)


def ec_for_anharmonicity(eta, ej, tol=1e-3, max_iter=200):
    """Solve the anharmonicity series for EC at fixed EJ (Newton + bisection).

    eta is negative; the series magnitude grows monotonically with EC.
    """
    if eta >= 0:
        raise DomainError("anharmonicity must be negative")
    lo, hi = 1e5, 0.49 * ej  # keep xi below ~1
    if not (anharmonicity_from_energies(lo, ej) >= eta >= anharmonicity_from_energies(hi, ej)):
        raise ConvergenceError(
            f"no EC in [{lo:.3g}, {hi:.3g}] Hz gives eta = {eta:.6g} Hz at EJ = {ej:.6g} Hz")
    ec = min(max(-eta, lo), hi)
    for _ in range(max_iter):
        f = anharmonicity_from_energies(ec, ej) - eta
        if abs(f) < tol:
            return ec
        if f > 0:
            lo = ec   # eta_model > eta target means EC too small
        else:
            hi = ec
        h = ec * 1e-6
        dfdx = (anharmonicity_from_energies(ec + h, ej)
                - anharmonicity_from_energies(ec - h, ej)) / (2.0 * h)
        step = f / dfdx
        ec_new = ec - step
        if not (lo < ec_new < hi):
            ec_new = 0.5 * (lo + hi)
        ec = ec_new
    raise ConvergenceError("EC solve did not converge", residuals=(f,))


def solve_transmon_from_spectrum(f01, eta, gap_ev=GAP_AL_EV, temperature=T_COLD,
                                 ratio=RN_RATIO, tol=1.0, max_iter=100):
    """Simultaneously invert the spectrum for (R, EC, EJ).

    Damped Newton on (log R, log EC) with a central-difference Jacobian
    (relative step 1e-6).  Both unknowns are positive and span decades,
    which is why the iteration runs in log space.  Iterates are kept inside
    the EC 50-500 MHz and R 1-100 kohm brackets; failure to reach ``tol``
    (Hz, on both residuals) raises with a residual report.
    """
    if f01 <= 0:
        raise DomainError("f01 must be positive")
    if eta >= 0:
        raise DomainError("anharmonicity must be negative")

    def residuals(log_r, log_ec):
        r = math.exp(log_r)
        ec = math.exp(log_ec)
        ej = ej_from_resistance(r, gap_ev, temperature, ratio)
        return (f01_from_energies(ej, ec) - f01,
                anharmonicity_from_energies(ec, ej) - eta)

    # Initial guess: EC ~ -eta, EJ from the leading-order plasma frequency.
    ec0 = min(max(-eta, EC_BRACKET[0]), EC_BRACKET[1])
    ej0 = (f01 + ec0) ** 2 / (8.0 * ec0)
    r0 = min(max(resistance_from_ej(ej0, gap_ev, temperature, ratio),
                 R_BRACKET[0]), R_BRACKET[1])
    x = [math.log(r0), math.log(ec0)]
    lo = [math.log(R_BRACKET[0]), math.log(EC_BRACKET[0])]
    hi = [math.log(R_BRACKET[1]), math.log(EC_BRACKET[1])]

    scale = (abs(f01), abs(eta))

    def cost(xv):
        fr = residuals(*xv)
        return (fr[0] / scale[0]) ** 2 + (fr[1] / scale[1]) ** 2, fr

    c, fr = cost(x)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if abs(fr[0]) < tol and abs(fr[1]) < tol:
            break
        # numeric Jacobian of scaled residuals wrt log-parameters
        jac = [[0.0, 0.0], [0.0, 0.0]]
        h = 1e-6
        for j in range(2):
            xp = list(x)
            xm = list(x)
            xp[j] += h
            xm[j] -= h
            fp = residuals(*xp)
            fm = residuals(*xm)
            for i in range(2):
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * h * scale[i])
        g = (fr[0] / scale[0], fr[1] / scale[1])
        det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]
        if det == 0.0:
            raise ConvergenceError("singular Jacobian in spectrum solve",
                                   residuals=fr)
        dx0 = -(g[0] * jac[1][1] - g[1] * jac[0][1]) / det
        dx1 = -(jac[0][0] * g[1] - jac[1][0] * g[0]) / det
        lam = 1.0
        for _ in range(40):
            trial = [min(max(x[0] + lam * dx0, lo[0]), hi[0]),
                     min(max(x[1] + lam * dx1, lo[1]), hi[1])]
            c_new, fr_new = cost(trial)
            if c_new < c:
                x, c, fr = trial, c_new, fr_new
                break
            lam *= 0.5
        else:
            break  # no downhill step left

    if not (abs(fr[0]) < tol and abs(fr[1]) < tol):
        raise ConvergenceError(
            "spectrum inverse solve did not converge: "
            f"f01 residual {fr[0]:.3g} Hz, eta residual {fr[1]:.3g} Hz",
            residuals=fr)
    r = math.exp(x[0])
    ec = math.exp(x[1])
    return TransmonSolution(
        r=r, ec=ec, ej=ej_from_resistance(r, gap_ev, temperature, ratio),
        f01_residual=fr[0], eta_residual=fr[1], iterations=iterations)


def frequency_bound_pair(r, rel_err, ec, gap_ev=GAP_AL_EV, temperature=T_COLD,
                         ratio=RN_RATIO):
    """One-sided frequencies at R*(1 -/+ rel_err).

    At each perturbed resistance the charging energy is re-solved so that
    the anharmonicity stays at its central value, mirroring how the inverse
    procedure is repeated for a resistance band; holding EC fixed instead
    narrows the band by a few percent.
    """
    if rel_err < 0:
        raise DomainError("relative error must be non-negative")
    ej_center = ej_from_resistance(r, gap_ev, temperature, ratio)
    eta_center = anharmonicity_from_energies(ec, ej_center)
    out = []
    for sign in (-1.0, +1.0):
        rr = r * (1.0 + sign * rel_err)
        ej = ej_from_resistance(rr, gap_ev, temperature, ratio)
        ec_side = ec_for_anharmonicity(eta_center, ej)
        out.append(f01_from_energies(ej, ec_side))
    return out[0], out[1]


def frequency_precision_bound(r, rel_err, ec, gap_ev=GAP_AL_EV,
                              temperature=T_COLD, ratio=RN_RATIO):
    """Width of the frequency band spanned by a relative resistance error."""
    if rel_err == 0:
        return 0.0
    f_minus, f_plus = frequency_bound_pair(r, rel_err, ec, gap_ev,
                                           temperature, ratio)
    return f_minus - f_plus
