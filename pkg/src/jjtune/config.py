"""Variant configuration: TOML sections validated into JunctionVariant."""

import importlib.resources
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError
from .physics import SimmonsParams
from .twin import (AgingLaw, DropModel, FailureModel, JunctionVariant,
                   LogGrowth, RelaxationLaw)

GLOBAL_KEYS = {"gap_ev", "ratio", "tref", "ec_default"}
# physical constants are defined values; overriding them is rejected
FORBIDDEN_GLOBAL_KEYS = {"e", "h", "hbar", "kb", "k_b", "phi0", "alpha_bcs"}
VARIANT_KEYS = {"r_w", "width", "area", "r_a", "p_ox", "t_ox", "d_ox",
                "age_days", "alpha0", "v0", "beta_table", "v_break",
                "r_short_max", "relaxation", "drop", "hazard", "aging",
                "simmons"}
RELAXATION_KEYS = {"slope_a", "slope_b", "slope_tau", "offset_a", "offset_b",
                   "offset_tau", "t_freeze"}
DROP_KEYS = {"depth0", "duration0", "growth"}
HAZARD_KEYS = {"early_rate", "late_rate", "early_window"}
AGING_KEYS = {"c_ref", "tau", "w_ref", "exponent"}
SIMMONS_KEYS = {"g0", "t0", "tref"}


@dataclass
class PhysicsDefaults:
    gap_ev: float = 174.3e-6
    ratio: float = 1.1385
    tref: float = 297.0
    ec_default: float = 186.7e6


@dataclass
class Config:
    defaults: PhysicsDefaults
    variants: dict = field(default_factory=dict)

    def variant(self, name):
        try:
            return self.variants[name]
        except KeyError:
            raise ConfigError(
                f"unknown variant {name!r}; configured: "
                f"{sorted(self.variants)}") from None


def _check_keys(section, allowed, where, forbidden=frozenset()):
    for key in section:
        if key in forbidden:
            raise ConfigError(f"{where}: overriding {key!r} is forbidden")
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _parse_relaxation(section, where):
    _check_keys(section, RELAXATION_KEYS, where)
    try:
        law = RelaxationLaw(
            slope=LogGrowth(a=float(section["slope_a"]),
                            b=float(section["slope_b"]),
                            tau=float(section["slope_tau"])),
            offset=LogGrowth(a=float(section["offset_a"]),
                             b=float(section["offset_b"]),
                             tau=float(section["offset_tau"])),
            t_freeze=float(section.get("t_freeze", 150.0)))
    except KeyError as exc:
        raise ConfigError(f"{where}: missing key {exc}") from None
    return law


def _parse_variant(name, section):
    where = f"variant.{name}"
    _check_keys(section, VARIANT_KEYS, where)
    missing = {"r_w", "alpha0", "v0", "beta_table", "relaxation"} - set(section)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    beta_raw = section["beta_table"]
    try:
        beta_table = [(float(v), float(b)) for v, b in beta_raw]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: malformed beta_table") from exc
    variant = JunctionVariant(
        name=name,
        r_w=float(section["r_w"]),
        width=float(section.get("width", 200e-9)),
        area=float(section.get("area", 0.0)),
        r_a=float(section.get("r_a", 0.0)),
        p_ox=float(section.get("p_ox", 0.0)),
        t_ox=float(section.get("t_ox", 0.0)),
        d_ox=float(section.get("d_ox", 0.0)),
        age_days=float(section.get("age_days", 0.0)),
        alpha0=float(section["alpha0"]),
        v0=float(section["v0"]),
        beta_table=beta_table,
        relaxation=_parse_relaxation(section["relaxation"], f"{where}.relaxation"),
        v_break=float(section.get("v_break", 1.1)),
        r_short_max=float(section.get("r_short_max", 260.0)),
    )
    if "drop" in section:
        _check_keys(section["drop"], DROP_KEYS, f"{where}.drop")
        variant.drop = DropModel(**{k: float(v) for k, v in section["drop"].items()})
    if "hazard" in section:
        _check_keys(section["hazard"], HAZARD_KEYS, f"{where}.hazard")
        variant.hazard = FailureModel(**{k: float(v)
                                         for k, v in section["hazard"].items()})
    if "aging" in section:
        _check_keys(section["aging"], AGING_KEYS, f"{where}.aging")
        variant.aging = AgingLaw(**{k: float(v)
                                    for k, v in section["aging"].items()})
    if "simmons" in section:
        _check_keys(section["simmons"], SIMMONS_KEYS, f"{where}.simmons")
        variant.simmons = SimmonsParams(**{k: float(v)
                                           for k, v in section["simmons"].items()})
    return variant.validate()


def parse_config(text):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from exc
    _check_keys(doc, {"global", "variant"}, "config")
    g = doc.get("global", {})
    _check_keys(g, GLOBAL_KEYS, "global", forbidden=FORBIDDEN_GLOBAL_KEYS)
    defaults = PhysicsDefaults(
        gap_ev=float(g.get("gap_ev", 174.3e-6)),
        ratio=float(g.get("ratio", 1.1385)),
        tref=float(g.get("tref", 297.0)),
        ec_default=float(g.get("ec_default", 186.7e6)))
    variants = {}
    for name, section in doc.get("variant", {}).items():
        variants[name] = _parse_variant(name, section)
    return Config(defaults=defaults, variants=variants)


def load_config(path=None):
    """Load a variant config; with no path, the packaged defaults."""
    if path is None:
        text = (importlib.resources.files("jjtune") / "data" /
                "variants.toml").read_text(encoding="utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return parse_config(text)
