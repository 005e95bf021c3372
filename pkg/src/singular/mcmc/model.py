"""Target family p(w) ∝ exp(-n f(w)) φ(w), builtin singular potentials and log densities."""

import logging
import math
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

import attrs
import numpy as np
from scipy import special

from singular.mcmc.errors import (
    ArgumentError,
    DimensionError,
    ModelContractError,
    NumericalError,
)

logger = logging.getLogger(__name__)

Potential = Callable[[np.ndarray], np.ndarray]
LogDensity = Callable[[np.ndarray], np.ndarray]
PriorSampler = Callable[[np.random.Generator], np.ndarray]

LOG_2PI = math.log(2.0 * math.pi)


class PriorKind(str, Enum):
    """Supported prior families."""

    StandardNormal = "StandardNormal"
    Custom = "Custom"


@attrs.frozen
class PriorSpec:
    """Prior φ on R^d.

    ``log_density`` maps an array of shape (..., d) to (...). ``sampler``
    draws one point of shape (d,). ``scale`` is the prior standard scale,
    used to size quadrature boxes.
    """

    kind: PriorKind
    log_density: LogDensity
    sampler: PriorSampler
    scale: float = attrs.field(default=1.0)

    @scale.validator
    def _check_scale(self, attribute, value):
        if not value > 0:
            raise ArgumentError(f"prior scale must be positive, got {value}")


def standard_normal_prior(dim: int) -> PriorSpec:
    """d-dimensional standard normal prior."""

    def log_density(w: np.ndarray) -> np.ndarray:
        return -0.5 * np.sum(np.square(w), axis=-1) - 0.5 * dim * LOG_2PI

    def sampler(rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(dim)

    return PriorSpec(PriorKind.StandardNormal, log_density, sampler, 1.0)


def custom_prior(log_density: LogDensity, sampler: PriorSampler, scale: float = 1.0) -> PriorSpec:
    """User supplied prior. ``log_density`` must accept (..., d) arrays."""
    return PriorSpec(PriorKind.Custom, log_density, sampler, scale)


def box_uniform_prior(low: float, high: float, dim: int) -> PriorSpec:
    """Uniform prior on the cube [low, high]^d (log density -inf outside)."""
    if not high > low:
        raise ArgumentError(f"empty box [{low}, {high}]")
    log_mass = -dim * math.log(high - low)

    def log_density(w: np.ndarray) -> np.ndarray:
        inside = np.all((w >= low) & (w <= high), axis=-1)
        return np.where(inside, log_mass, -np.inf)

    def sampler(rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(low, high, size=dim)

    return PriorSpec(PriorKind.Custom, log_density, sampler, max(abs(low), abs(high)))


@attrs.frozen
class CoordPole:
    """Pole (λ_i, m_i) of the zeta function weighted by |w_i|."""

    lam: Fraction = attrs.field(converter=Fraction)
    mult: int

    def __attrs_post_init__(self):
        if self.lam <= 0 or self.mult < 1:
            raise ModelContractError(
                f"pole needs lambda > 0 and m >= 1, got ({self.lam}, {self.mult})"
            )


def _to_poles(values) -> Tuple[CoordPole, ...]:
    return tuple(v if isinstance(v, CoordPole) else CoordPole(*v) for v in values)


@attrs.frozen
class PoleSpectrum:
    """Largest pole (λ, m) of ζ(z) and the per-coordinate poles (λ_i, m_i)."""

    lam: Fraction = attrs.field(converter=Fraction)
    mult: int
    per_coord: Tuple[CoordPole, ...] = attrs.field(converter=_to_poles)

    def __attrs_post_init__(self):
        if self.lam <= 0 or self.mult < 1:
            raise ModelContractError(
                f"spectrum needs lambda > 0 and m >= 1, got ({self.lam}, {self.mult})"
            )
        for i, pole in enumerate(self.per_coord):
            if pole.lam < self.lam or (pole.lam == self.lam and pole.mult > self.mult):
                raise ModelContractError(
                    f"inadmissible pole for coordinate {i}: (lambda_i, m_i)=({pole.lam}, {pole.mult}) "
                    f"vs (lambda, m)=({self.lam}, {self.mult}); need lambda_i > lambda "
                    "or lambda_i = lambda with m_i <= m"
                )

    @property
    def dim(self) -> int:
        """Number of coordinates covered."""
        return len(self.per_coord)

    def pole(self, coord: int) -> CoordPole:
        """Pole of coordinate ``coord`` (0-based)."""
        if not 0 <= coord < len(self.per_coord):
            raise ArgumentError(f"coordinate {coord} out of range [0, {len(self.per_coord)})")
        return self.per_coord[coord]

    def gap(self, coord: int) -> Tuple[Fraction, int]:
        """(λ_i - λ, m_i - m) for ``coord``."""
        pole = self.pole(coord)
        return pole.lam - self.lam, pole.mult - self.mult


def w2w2_potential(w: np.ndarray) -> np.ndarray:
    """f(w) = w1² w2²."""
    return np.square(w[..., 0]) * np.square(w[..., 1])


def w2w4_potential(w: np.ndarray) -> np.ndarray:
    """f(w) = w1² w2⁴."""
    return np.square(w[..., 0]) * np.square(np.square(w[..., 1]))


def zero_potential(w: np.ndarray) -> np.ndarray:
    """f ≡ 0 (flat target, p = φ)."""
    return np.zeros(np.shape(w)[:-1])


_GAMMA_QUARTER = float(special.gamma(0.25))
_GAMMA_THREE_QUARTERS = float(special.gamma(0.75))

_BUILTINS = {
    "w2w2": (
        w2w2_potential,
        PoleSpectrum(Fraction(1, 2), 2, [(Fraction(1, 2), 1), (Fraction(1, 2), 1)]),
        1.0 / (2.0 * math.pi),
        (1.0 / math.sqrt(2.0 * math.pi), 1.0 / math.sqrt(2.0 * math.pi)),
    ),
    "w2w4": (
        w2w4_potential,
        PoleSpectrum(Fraction(1, 4), 1, [(Fraction(1, 4), 1), (Fraction(1, 2), 2)]),
        2.0**-1.75 * _GAMMA_QUARTER / math.pi,
        (2.0**-1.25 * _GAMMA_THREE_QUARTERS / math.pi, 1.0 / (4.0 * math.pi)),
    ),
}


class BuiltinPotential(str, Enum):
    """The two builtin singular potentials."""

    W2W2 = "w2w2"
    W2W4 = "w2w4"

    @property
    def potential(self) -> Potential:
        """Vectorised f."""
        return _BUILTINS[self.value][0]

    @property
    def spectrum(self) -> PoleSpectrum:
        """Pole spectrum (λ, m), (λ_i, m_i)."""
        return _BUILTINS[self.value][1]

    @property
    def g_const(self) -> float:
        """Leading constant g(-λ) of the state density of f."""
        return _BUILTINS[self.value][2]

    @property
    def g_coord(self) -> Tuple[float, ...]:
        """Leading constants g_i(-λ_i) of the |w_i|-weighted state densities."""
        return _BUILTINS[self.value][3]


@attrs.frozen
class TargetModel:
    """p(w) ∝ exp(-n f(w)) φ(w).

    ``potential`` maps (..., d) arrays to (...) arrays. Set ``vectorized`` to
    False for a potential that only accepts a single (d,) point.
    """

    dim: int
    potential: Potential
    prior: PriorSpec
    n: float = attrs.field(converter=float)
    name: str = "custom"
    spectrum: Optional[PoleSpectrum] = None
    builtin: Optional[BuiltinPotential] = None
    vectorized: bool = True

    def __attrs_post_init__(self):
        if self.dim < 1:
            raise ArgumentError(f"dimension must be positive, got {self.dim}")
        if not (self.n > 0 and math.isfinite(self.n)):
            raise ArgumentError(f"n must be a positive finite real, got {self.n}")
        if self.spectrum is not None and self.spectrum.dim != self.dim:
            raise ModelContractError(
                f"spectrum covers {self.spectrum.dim} coordinates, model has {self.dim}"
            )
        f0 = float(self.evaluate(np.zeros(self.dim)))
        if f0 != 0.0:
            raise ModelContractError(f"{self.name}: f(0) must be 0, got {f0}")

    def evaluate(self, w: np.ndarray) -> np.ndarray:
        """Raw potential values, without contract checks."""
        if self.vectorized:
            return np.asarray(self.potential(w), dtype=float)
        flat = w.reshape(-1, self.dim)
        values = np.fromiter((self.potential(x) for x in flat), dtype=float, count=len(flat))
        return values.reshape(w.shape[:-1])

    def with_n(self, n: float) -> "TargetModel":
        """Same family member at another scale n."""
        return attrs.evolve(self, n=n)


def _as_points(model: TargetModel, w) -> np.ndarray:
    arr = np.asarray(w, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != model.dim:
        raise DimensionError(
            f"{model.name}: expected vectors of length {model.dim}, got shape {arr.shape}"
        )
    return arr


def _potential(model: TargetModel, arr: np.ndarray) -> np.ndarray:
    f = model.evaluate(arr)
    bad = np.isnan(f) | (f < 0)
    if np.any(bad):
        where = arr[bad] if arr.ndim > 1 else arr
        raise ModelContractError(
            f"{model.name}: potential must be nonnegative, got f={f[bad] if f.ndim else f} "
            f"at w={np.asarray(where).tolist()}"
        )
    return f


def potential_value(model: TargetModel, w):
    """f(w) ≥ 0. Accepts one point (d,) or a batch (..., d)."""
    arr = _as_points(model, w)
    f = _potential(model, arr)
    return float(f) if arr.ndim == 1 else f


def log_prior(model: TargetModel, w):
    """log φ(w)."""
    arr = _as_points(model, w)
    lp = np.asarray(model.prior.log_density(arr), dtype=float)
    return float(lp) if arr.ndim == 1 else lp


def log_unnormalized_density(model: TargetModel, w):
    """-n f(w) + log φ(w). Z is never formed."""
    arr = _as_points(model, w)
    f = _potential(model, arr)
    lp = np.asarray(model.prior.log_density(arr), dtype=float)
    value = -model.n * f + lp
    return float(value) if arr.ndim == 1 else value


def acceptance_probability(model: TargetModel, w, w_prime) -> float:
    """min(1, p(w')/p(w))."""
    delta = log_unnormalized_density(model, w_prime) - log_unnormalized_density(model, w)
    if math.isnan(delta) or delta == math.inf:
        raise NumericalError("non-finite log density difference", w, w_prime)
    return 1.0 if delta >= 0 else math.exp(delta)


def builtin_model(potential: BuiltinPotential, n: float, prior: Optional[PriorSpec] = None) -> TargetModel:
    """Builtin model with its tabulated spectrum."""
    potential = BuiltinPotential(potential)
    return TargetModel(
        dim=2,
        potential=potential.potential,
        prior=prior or standard_normal_prior(2),
        n=n,
        name=potential.value,
        spectrum=potential.spectrum,
        builtin=potential,
    )


ModelFactory = Callable[[float], TargetModel]

_REGISTRY: Dict[str, ModelFactory] = {}


def register_model(name: str, factory: ModelFactory) -> None:
    """Register a model factory ``n -> TargetModel`` under ``name``."""
    key = name.strip().lower()
    if not key:
        raise ArgumentError("model name must not be empty")
    if key in _REGISTRY:
        logger.warning("Replacing registered model", extra={"model": key})
    _REGISTRY[key] = factory


def registered_models() -> List[str]:
    """Names accepted by ``load_model``."""
    return sorted(_REGISTRY)


def load_model(name: str, n: float) -> TargetModel:
    """Instantiate a registered model at scale n."""
    key = name.strip().lower()
    try:
        factory = _REGISTRY[key]
    except KeyError as e:
        raise ArgumentError(
            f"unknown model {name!r}, expected one of {registered_models()}"
        ) from e
    return factory(n)


for _builtin in BuiltinPotential:
    register_model(_builtin.value, lambda n, _b=_builtin: builtin_model(_b, n))
