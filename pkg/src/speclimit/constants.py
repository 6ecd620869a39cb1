"""Physical constants and the unit conversions the toolkit relies on.

Internal units are keV for energy, seconds for time and metres for
length. Values are frozen CODATA 2018 numbers; tests pin arithmetic
on these exact digits, so do not refresh them casually.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import DomainError

__all__ = [
    "PhysicalConstants",
    "Exposure",
    "CODATA2018",
    "SECONDS_PER_DAY",
    "EV_PER_KEV",
    "FWHM_PER_SIGMA",
    "ELEMENTARY_CHARGE_C",
    "AVOGADRO_PER_MOL",
    "fwhm_to_sigma",
    "sigma_to_fwhm",
    "kev_to_ev",
    "ev_to_kev",
    "days_to_seconds",
    "seconds_to_days",
    "mass_ratio_squared",
    "constants_table",
]

SECONDS_PER_DAY = 86400.0
EV_PER_KEV = 1000.0

# FWHM = 2 sqrt(2 ln 2) sigma for a Gaussian response
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

ELEMENTARY_CHARGE_C = 1.602176634e-19  # exact since the 2019 SI redefinition
AVOGADRO_PER_MOL = 6.02214076e23       # exact since the 2019 SI redefinition


@dataclass(frozen=True)
class PhysicalConstants:
    """Bundle of the constants entering rate formulas.

    The electromagnetic coupling is stored as the dimensionless
    alpha_em = e^2 / (hbar c), i.e. the squared charge in the Gaussian
    convention measured in units of hbar c. Formulas that need e^2
    restore hbar c explicitly so emitted rates come out in 1/(s keV).
    """

    electron_mass_kev: float = 510.99895000
    nucleon_mass_kev: float = 938272.08816        # proton rest energy
    electron_charge_squared: float = 7.2973525693e-3  # alpha_em, dimensionless
    hbar_kev_s: float = 6.582119569e-19
    hbar_c_kev_m: float = 1.973269804e-10
    correlation_length_default_m: float = 1.0e-7
    lambda_qmsl_reference_per_s: float = 1.0e-16

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise DomainError(f"{f.name} must be strictly positive")
        ratio = self.nucleon_mass_kev / self.electron_mass_kev
        if not 1836.0 <= ratio <= 1836.3:
            raise DomainError(
                "nucleon to electron mass ratio %.6f outside accepted window [1836.0, 1836.3]" % ratio
            )

    def mass_ratio_squared(self) -> float:
        """(m_e / m_N)^2, the suppression of mass-proportional emission."""
        return (self.electron_mass_kev / self.nucleon_mass_kev) ** 2


CODATA2018 = PhysicalConstants()

# Published collapse-rate and violation-probability bounds, kept as
# comparison references for reports and consistency tests. These are
# literature values, not re-derived by this package.
LAMBDA_BOUND_SLAB_PER_S = 0.55e-16             # germanium-slab emission analysis, original
LAMBDA_BOUND_SLAB_CORRECTED_PER_S = 2.0e-16    # re-analysis of the same slab data
LAMBDA_BOUND_80KGDAY_PER_S = 2.5e-18           # 80 kg day germanium spectrum, no mass scaling
LAMBDA_BOUND_80KGDAY_MASSPROP_PER_S = 8.5e-12  # same spectrum, mass-proportional coupling
BETA2_OVER_2_BOUND_CCD_SEARCH = 4.7e-29        # forbidden-line search bound, CCD era


@dataclass(frozen=True)
class Exposure:
    """Detector mass and live time; product is the usual kg day figure."""

    mass_kg: float
    live_time_days: float

    def __post_init__(self):
        if self.mass_kg < 0 or self.live_time_days < 0:
            raise DomainError("exposure mass and live time must be non-negative")

    @property
    def product_kg_day(self) -> float:
        return self.mass_kg * self.live_time_days

    @property
    def live_time_s(self) -> float:
        return self.live_time_days * SECONDS_PER_DAY


def fwhm_to_sigma(fwhm_kev: float) -> float:
    if fwhm_kev <= 0:
        raise DomainError("FWHM must be positive")
    return fwhm_kev / FWHM_PER_SIGMA


def sigma_to_fwhm(sigma_kev: float) -> float:
    if sigma_kev <= 0:
        raise DomainError("sigma must be positive")
    return sigma_kev * FWHM_PER_SIGMA


def kev_to_ev(energy_kev):
    return energy_kev * EV_PER_KEV


def ev_to_kev(energy_ev):
    return energy_ev / EV_PER_KEV


def days_to_seconds(days):
    return days * SECONDS_PER_DAY


def seconds_to_days(seconds):
    return seconds / SECONDS_PER_DAY


def mass_ratio_squared(constants: PhysicalConstants = CODATA2018) -> float:
    return constants.mass_ratio_squared()


def constants_table(constants: PhysicalConstants = CODATA2018) -> str:
    """Key/value dump of every constant with units, one per line."""
    rows = [
        ("electron-mass-kev", constants.electron_mass_kev),
        ("nucleon-mass-kev", constants.nucleon_mass_kev),
        ("electron-charge-squared-alpha-em", constants.electron_charge_squared),
        ("hbar-kev-s", constants.hbar_kev_s),
        ("hbar-c-kev-m", constants.hbar_c_kev_m),
        ("correlation-length-default-m", constants.correlation_length_default_m),
        ("lambda-qmsl-reference-per-s", constants.lambda_qmsl_reference_per_s),
        ("elementary-charge-c", ELEMENTARY_CHARGE_C),
        ("avogadro-per-mol", AVOGADRO_PER_MOL),
        ("seconds-per-day", SECONDS_PER_DAY),
        ("fwhm-per-sigma", FWHM_PER_SIGMA),
        ("nucleon-to-electron-mass-ratio", constants.nucleon_mass_kev / constants.electron_mass_kev),
        ("mass-ratio-squared", constants.mass_ratio_squared()),
    ]
    return "\n".join(f"{name}: {value!r}" for name, value in rows) + "\n"
