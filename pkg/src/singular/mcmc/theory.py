"""Closed-form acceptance-rate asymptotics.

All functions are pure. Inputs outside a formula's domain raise
``TheoryDomainError``; spectra/case mismatches raise ``ModelContractError``
subclasses.
"""

import math
from enum import Enum
from typing import Dict, Optional, Tuple

import attrs
from scipy import special

from singular.mcmc.errors import ArgumentError, CaseMismatchError, ModelContractError, TheoryDomainError
from singular.mcmc.model import BuiltinPotential, PoleSpectrum

EULER_GAMMA = 0.57721566490153286
SQRT2 = math.sqrt(2.0)
FOUR_SQRT2 = 4.0 * SQRT2
LOG2 = math.log(2.0)

_G14 = float(special.gamma(0.25))
_G34 = float(special.gamma(0.75))
_G12 = math.sqrt(math.pi)


class FormulaId(str, Enum):
    """Provenance of a prediction."""

    Theorem1Main = "Theorem1Main"
    AppendixA_U1 = "AppendixA_U1"
    AppendixB_U1 = "AppendixB_U1"
    AppendixB_U2 = "AppendixB_U2"
    Lemma2_Z = "Lemma2_Z"
    Lemma2_Zi = "Lemma2_Zi"
    AppendixA_Z = "AppendixA_Z"
    AppendixA_Z1 = "AppendixA_Z1"
    AppendixB_Z = "AppendixB_Z"
    AppendixB_Z1 = "AppendixB_Z1"
    AppendixB_Z2 = "AppendixB_Z2"


class ScheduleCase(str, Enum):
    """Relative position of the pole of coordinate i."""

    Case1 = "Case1"  # λ < λ_i
    Case2 = "Case2"  # λ = λ_i, m > m_i
    Case3 = "Case3"  # λ = λ_i, m = m_i


class AppendixFunction(str, Enum):
    """Zeta / state-density functions with closed forms for the builtin models.

    A* belong to w2w2, B* to w2w4; the digit is the weighting coordinate
    (1-based), none means the unweighted function.
    """

    A = "A"
    A1 = "A1"
    B = "B"
    B1 = "B1"
    B2 = "B2"


@attrs.frozen
class TheoryPrediction:
    """A predicted value and the inputs it came from."""

    value: float
    formula_id: FormulaId
    n: Optional[float] = None
    sigma: Optional[float] = None
    spectrum: Optional[PoleSpectrum] = None
    coord: Optional[int] = None
    const: Optional[float] = None


def _check_n_log(n: float) -> float:
    if not n > math.e:
        raise TheoryDomainError(f"n must exceed e so that log n > 1, got {n}")
    return math.log(n)


def _check_positive(name: str, value: float) -> float:
    if not (value > 0 and math.isfinite(value)):
        raise ArgumentError(f"{name} must be a positive finite real, got {value}")
    return float(value)


def classify_case(spec: PoleSpectrum, coord: int) -> ScheduleCase:
    """Case of coordinate ``coord`` (0-based)."""
    pole = spec.pole(coord)
    if pole.lam > spec.lam:
        return ScheduleCase.Case1
    if pole.lam == spec.lam and pole.mult < spec.mult:
        return ScheduleCase.Case2
    if pole.lam == spec.lam and pole.mult == spec.mult:
        return ScheduleCase.Case3
    raise ModelContractError(
        f"coordinate {coord}: (lambda_i, m_i)=({pole.lam}, {pole.mult}) is excluded; "
        f"need lambda_i > lambda={spec.lam} or lambda_i = lambda with m_i <= m={spec.mult}"
    )


def theorem1_U(n: float, sigma: float, spec: PoleSpectrum, coord: int, c: float = 1.0) -> float:
    """Main term (log n)^{m_i-m} n^{-(λ_i-λ)} c 4√2/σ."""
    log_n = _check_n_log(n)
    _check_positive("sigma", sigma)
    _check_positive("c", c)
    classify_case(spec, coord)
    d_lam, d_m = spec.gap(coord)
    log_factor = d_m * math.log(log_n) - float(d_lam) * log_n
    return math.exp(log_factor) * c * FOUR_SQRT2 / sigma


def appendixA_U1(n: float, sigma: float) -> float:
    """U₁ (= U₂) of w2w2: 8√π / (σ (log n + 4 log 2 - γ))."""
    _check_positive("sigma", sigma)
    if not n > 0:
        raise TheoryDomainError(f"n must be positive, got {n}")
    denominator = math.log(n) + 4.0 * LOG2 - EULER_GAMMA
    if not denominator > 0:
        raise TheoryDomainError(f"log n + 4 log 2 - γ must be positive, got {denominator} at n={n}")
    return 8.0 * _G12 / (sigma * denominator)


def appendixB_U1(sigma: float) -> float:
    """U₁ of w2w4: (8/σ) Γ(3/4)/Γ(1/4), independent of n."""
    _check_positive("sigma", sigma)
    return 8.0 / sigma * _G34 / _G14


def appendixB_U2(n: float, sigma: float) -> float:
    """U₂ of w2w4."""
    log_n = _check_n_log(n)
    _check_positive("sigma", sigma)
    correction = 1.0 + (LOG2 - 4.0 * EULER_GAMMA) / log_n
    return 2.0**2.25 / sigma * log_n / n**0.25 * _G12 / _G14**2 * correction


def lemma2_Z(n: float, spec: PoleSpectrum, g_const: float = 1.0) -> float:
    """Z ≈ (log n)^{m-1} n^{-λ} g Γ(λ)."""
    log_n = _check_n_log(n)
    _check_positive("g_const", g_const)
    lam = float(spec.lam)
    return log_n ** (spec.mult - 1) * n**-lam * g_const * float(special.gamma(lam))


def lemma2_Zi(n: float, spec: PoleSpectrum, coord: int, g_const: float = 1.0) -> float:
    """Z_i ≈ (log n)^{m_i-1} n^{-λ_i} g_i Γ(λ_i)."""
    log_n = _check_n_log(n)
    _check_positive("g_const", g_const)
    pole = spec.pole(coord)
    lam = float(pole.lam)
    return log_n ** (pole.mult - 1) * n**-lam * g_const * float(special.gamma(lam))


_LOG_N_CLOSED = {FormulaId.AppendixA_Z, FormulaId.AppendixB_Z2}


def appendix_Z_closed(n: float, which: FormulaId) -> float:
    """Closed forms of Z, Z_i for the builtin models."""
    try:
        which = FormulaId(which)
    except ValueError as e:
        raise ArgumentError(f"unknown formula id {which!r}") from e

    if which in _LOG_N_CLOSED:
        log_n = _check_n_log(n)
    elif not n > 0:
        raise TheoryDomainError(f"n must be positive, got {n}")

    if which == FormulaId.AppendixA_Z:
        return 1.0 / (2.0 * _G12) * log_n / math.sqrt(n) * (1.0 + (4.0 * LOG2 - EULER_GAMMA) / log_n)
    if which == FormulaId.AppendixA_Z1:
        return 1.0 / (SQRT2 * math.sqrt(n))
    if which == FormulaId.AppendixB_Z:
        return n**-0.25 * 2.0**-1.75 / math.pi * _G14**2
    if which == FormulaId.AppendixB_Z1:
        return n**-0.25 * 2.0**-1.25 / math.pi * _G34 * _G14
    if which == FormulaId.AppendixB_Z2:
        return log_n / math.sqrt(n) / (4.0 * math.pi) * _G12 * (1.0 + (LOG2 - 4.0 * EULER_GAMMA) / log_n)
    raise ArgumentError(f"{which.value} is not a closed-form Z")


def schedule_sigma(case: ScheduleCase, spec: PoleSpectrum, coord: int, n: float, A_const: float = 1.0) -> float:
    """Step size that keeps the main-term acceptance rate at A/A = 1."""
    case = ScheduleCase(case)
    actual = classify_case(spec, coord)
    if actual != case:
        raise CaseMismatchError(f"coordinate {coord} is {actual.value}, not {case.value}")
    _check_positive("A_const", A_const)
    d_lam, d_m = spec.gap(coord)

    if case == ScheduleCase.Case3:
        if not n > 0:
            raise TheoryDomainError(f"n must be positive, got {n}")
        return FOUR_SQRT2 * A_const

    log_n = _check_n_log(n)
    if case == ScheduleCase.Case2:
        return FOUR_SQRT2 * A_const / log_n ** (-d_m)
    return FOUR_SQRT2 * A_const * math.exp(d_m * math.log(log_n) - float(d_lam) * log_n)


def amplitude_A(spec: PoleSpectrum, coord: int, g: float, g_i: float) -> float:
    """A(λ, λ_i) = g_i Γ(λ_i) / (g Γ(λ))."""
    _check_positive("g", g)
    _check_positive("g_i", g_i)
    lam_i = float(spec.pole(coord).lam)
    lam = float(spec.lam)
    return g_i * float(special.gamma(lam_i)) / (g * float(special.gamma(lam)))


def builtin_amplitude(potential: BuiltinPotential, coord: int) -> float:
    """A(λ, λ_i) from the tabulated g constants of a builtin model."""
    potential = BuiltinPotential(potential)
    return amplitude_A(potential.spectrum, coord, potential.g_const, potential.g_coord[coord])


def appendix_zeta(z: float, which: AppendixFunction) -> float:
    """ζ(z) = ∫ f^z φ (or ∫ f^z |w_i| φ) for the builtin models, z > -1/2."""
    which = AppendixFunction(which)
    if not z > -0.5:
        raise TheoryDomainError(f"closed forms hold for z > -1/2, got {z}")
    if which == AppendixFunction.A:
        return float(2.0 ** (2 * z) / math.pi * special.gamma(z + 0.5) ** 2)
    if which == AppendixFunction.A1:
        return float(2.0 ** (2 * z + 0.5) / math.pi * special.gamma(z + 1) * special.gamma(z + 0.5))
    if z <= -0.25:
        raise TheoryDomainError(f"w2w4 closed forms hold for z > -1/4, got {z}")
    if which == AppendixFunction.B:
        return float(2.0 ** (3 * z) / math.pi * special.gamma(z + 0.5) * special.gamma(2 * z + 0.5))
    if which == AppendixFunction.B1:
        return float(2.0 ** (3 * z + 0.5) / math.pi * special.gamma(z + 1) * special.gamma(2 * z + 0.5))
    return float(2.0 ** (3 * z + 0.5) / math.pi * special.gamma(z + 0.5) * special.gamma(2 * z + 1))


# V(t) ≈ K t^{a-1} (c - log t) when c is set, else K t^{a-1}
_STATE_DENSITY: Dict[AppendixFunction, Tuple[float, float, Optional[float]]] = {
    AppendixFunction.A: (1.0 / (2.0 * math.pi), 0.5, 2.0 * LOG2 - 2.0 * EULER_GAMMA),
    AppendixFunction.A1: (1.0 / math.sqrt(2.0 * math.pi), 0.5, None),
    AppendixFunction.B: (2.0**-1.75 / math.pi * _G14, 0.25, None),
    AppendixFunction.B1: (2.0**-1.25 / math.pi * _G34, 0.25, None),
    AppendixFunction.B2: (1.0 / (4.0 * math.pi), 0.5, 3.0 * LOG2 - 3.0 * EULER_GAMMA),
}


def appendix_state_density(t: float, which: AppendixFunction) -> float:
    """Small-t state density V(t) (or V_i(t)) of the builtin models."""
    which = AppendixFunction(which)
    if not t > 0:
        raise TheoryDomainError(f"state density needs t > 0, got {t}")
    k, a, c = _STATE_DENSITY[which]
    value = k * t ** (a - 1.0)
    if c is not None:
        value *= c - math.log(t)
    return value


def state_density_laplace(n: float, which: AppendixFunction) -> float:
    """∫₀^∞ e^{-nt} V(t) dt, evaluated exactly through Γ and the digamma function."""
    which = AppendixFunction(which)
    _check_positive("n", n)
    k, a, c = _STATE_DENSITY[which]
    value = k * float(special.gamma(a)) * n**-a
    if c is not None:
        value *= c + math.log(n) - float(special.digamma(a))
    return value


_CLOSED_U = {
    ("w2w2", 0): FormulaId.AppendixA_U1,
    ("w2w2", 1): FormulaId.AppendixA_U1,
    ("w2w4", 0): FormulaId.AppendixB_U1,
    ("w2w4", 1): FormulaId.AppendixB_U2,
}


def closed_form_for(model_name: str, coord: int) -> Optional[FormulaId]:
    """Formula giving the exact leading U of a builtin coordinate, if any."""
    return _CLOSED_U.get((model_name.strip().lower(), coord))


def predict(
    formula: FormulaId,
    n: Optional[float] = None,
    sigma: Optional[float] = None,
    spec: Optional[PoleSpectrum] = None,
    coord: Optional[int] = None,
    const: float = 1.0,
) -> TheoryPrediction:
    """Evaluate ``formula`` and keep its inputs."""
    formula = FormulaId(formula)

    def need(name, value):
        if value is None:
            raise ArgumentError(f"{formula.value} needs {name}")
        return value

    if formula == FormulaId.Theorem1Main:
        value = theorem1_U(need("n", n), need("sigma", sigma), need("spec", spec), need("coord", coord), const)
    elif formula == FormulaId.AppendixA_U1:
        value = appendixA_U1(need("n", n), need("sigma", sigma))
    elif formula == FormulaId.AppendixB_U1:
        value = appendixB_U1(need("sigma", sigma))
    elif formula == FormulaId.AppendixB_U2:
        value = appendixB_U2(need("n", n), need("sigma", sigma))
    elif formula == FormulaId.Lemma2_Z:
        value = lemma2_Z(need("n", n), need("spec", spec), const)
    elif formula == FormulaId.Lemma2_Zi:
        value = lemma2_Zi(need("n", n), need("spec", spec), need("coord", coord), const)
    else:
        value = appendix_Z_closed(need("n", n), formula)
    return TheoryPrediction(value, formula, n, sigma, spec, coord, const)


# exact σ → ∞ limit of U_i is K σ^{-1} Z_i/Z with K = 4/√(2π); the main term
# uses 4√2, so the two differ by this constant factor
LARGE_STEP_CONSTANT = 4.0 / math.sqrt(2.0 * math.pi)
MAIN_TERM_TO_LARGE_STEP = LARGE_STEP_CONSTANT / FOUR_SQRT2


def large_step_U(sigma: float, z: float, z_i: float) -> float:
    """Large-σ acceptance rate 4/(√(2π) σ) · Z_i/Z of a Gaussian one-coordinate proposal."""
    _check_positive("sigma", sigma)
    _check_positive("z", z)
    if not z_i >= 0:
        raise ArgumentError(f"z_i must be nonnegative, got {z_i}")
    return LARGE_STEP_CONSTANT / sigma * z_i / z
