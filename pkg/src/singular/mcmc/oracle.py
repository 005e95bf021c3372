"""Deterministic quadrature ground truth for Z, Z_i, ζ and the average acceptance rate U."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import attrs
import numpy as np
from scipy import special

from singular.mcmc import settings
from singular.mcmc.errors import ArgumentError, DimensionError, ModelContractError, QuadratureConvergenceError
from singular.mcmc.model import PriorKind, TargetModel, log_unnormalized_density, potential_value

logger = logging.getLogger(__name__)

# log-weight cutoff below the grid maximum; dropped terms are < e^-50 each
PRUNE_LOG = 50.0
ROW_BLOCK = 256
MAX_RELATIVE_ERROR = 0.1


def _min_nodes(instance, attribute, value):
    if value < 64:
        raise ArgumentError(f"{attribute.name} must be >= 64, got {value}")


def _positive(instance, attribute, value):
    if not (value > 0 and math.isfinite(value)):
        raise ArgumentError(f"{attribute.name} must be positive, got {value}")


@attrs.frozen
class QuadratureSpec:
    """Grid sizes.

    ``outer_nodes`` is the node count per dimension on [-L, L], with L =
    ``half_width`` prior scales. ``inner_nodes`` points span w_i ± 8σ for
    the small-σ inner rule. Nodes are composite Gauss–Legendre of ``order``
    points per panel.
    """

    outer_nodes: int = attrs.field(default=2048, validator=_min_nodes)
    half_width: float = attrs.field(default=8.0, validator=_positive)
    inner_nodes: int = attrs.field(default=4096, validator=_min_nodes)
    inner_half_width: float = attrs.field(default=8.0, validator=_positive)
    order: int = 16
    log_domain: bool = True

    def __attrs_post_init__(self):
        if self.order < 2:
            raise ArgumentError(f"order must be >= 2, got {self.order}")
        if not self.log_domain:
            raise ArgumentError("quadrature always accumulates in the log domain")


class QuadratureResult(NamedTuple):
    """Value and |full - half resolution| error estimate."""

    value: float
    error_estimate: float


class _Resolution(NamedTuple):
    outer: int
    inner: int


class AxisGrid(NamedTuple):
    """Symmetric 1-D rule."""

    nodes: np.ndarray
    log_weights: np.ndarray
    max_panel: float


def graded_axis(half_width: float, n: float, nodes: int, order: int = 16) -> AxisGrid:
    """Composite Gauss–Legendre rule on [-L, L] graded towards 0.

    Per half axis the panel edges are 0, then geometric up to a = min(4/√n,
    L/2), then geometric up to L; half the panels lie inside |w| ≤ a. The
    origin is a panel edge, never a node.
    """
    order = max(2, min(order, nodes // 8))
    panels = max(4, nodes // (2 * order))
    panels += panels % 2
    inner = panels // 2
    outer = panels - inner

    a = min(4.0 / math.sqrt(n), half_width / 2.0)
    first = a * a / half_width
    edges = np.concatenate(
        [[0.0], np.geomspace(first, a, inner), np.geomspace(a, half_width, outer + 1)[1:]]
    )
    t, v = special.roots_legendre(order)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    w = (half[:, None] * v[None, :]).ravel()
    return AxisGrid(
        nodes=np.concatenate([-x[::-1], x]),
        log_weights=np.log(np.concatenate([w[::-1], w])),
        max_panel=float(np.max(hi - lo)),
    )


def _axis(model: TargetModel, spec: QuadratureSpec, nodes: int) -> AxisGrid:
    return graded_axis(spec.half_width * model.prior.scale, model.n, nodes, spec.order)


def _require_2d(model: TargetModel) -> None:
    if model.dim != 2:
        raise DimensionError(f"quadrature supports d = 2, {model.name} has d = {model.dim}")


def _map_ordered(fn: Callable, items: Sequence) -> List:
    workers = min(settings.sampler_settings.threads, len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _row_blocks(count: int, size: int = ROW_BLOCK) -> List[slice]:
    return [slice(i, min(i + size, count)) for i in range(0, count, size)]


def _log_grid(model: TargetModel, grid: AxisGrid, log_integrand: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """log(weight × integrand) on the tensor grid, shape (N, N) as [w1, w2]."""
    x = grid.nodes
    lw = grid.log_weights

    def block(rows: slice) -> np.ndarray:
        pts = np.empty((rows.stop - rows.start, len(x), 2))
        pts[..., 0] = x[rows, None]
        pts[..., 1] = x[None, :]
        values = log_integrand(pts) if log_integrand is not None else log_unnormalized_density(model, pts)
        return values + lw[rows, None] + lw[None, :]

    return np.concatenate(_map_ordered(block, _row_blocks(len(x))), axis=0)


def _log_integral(model: TargetModel, grid: AxisGrid, log_integrand: Optional[Callable] = None) -> float:
    return float(special.logsumexp(_log_grid(model, grid, log_integrand)))


def _with_error(name: str, full: float, half: float) -> QuadratureResult:
    error = abs(full - half)
    if not math.isfinite(full) or error > MAX_RELATIVE_ERROR * abs(full):
        raise QuadratureConvergenceError(
            f"{name}: error estimate {error:.3g} exceeds 10% of value {full:.6g}; refine the grid",
            value=full,
            error=error,
        )
    return QuadratureResult(full, error)


def _resolutions(spec: QuadratureSpec) -> Tuple[_Resolution, _Resolution]:
    return (
        _Resolution(spec.outer_nodes, spec.inner_nodes),
        _Resolution(spec.outer_nodes // 2, spec.inner_nodes // 2),
    )


def _integrate(model: TargetModel, spec: QuadratureSpec, name: str, log_integrand: Optional[Callable] = None) -> QuadratureResult:
    _require_2d(model)
    full, half = (
        math.exp(_log_integral(model, _axis(model, spec, res.outer), log_integrand))
        for res in _resolutions(spec)
    )
    result = _with_error(name, full, half)
    logger.debug(
        "Quadrature done",
        extra={"quantity": name, "model": model.name, "n": model.n, "value": result.value, "error": result.error_estimate},
    )
    return result


def quad_Z(model: TargetModel, spec: QuadratureSpec = QuadratureSpec()) -> QuadratureResult:
    """Z = ∫ exp(-n f) φ."""
    return _integrate(model, spec, "Z")


def quad_Zi(model: TargetModel, coord: int, spec: QuadratureSpec = QuadratureSpec()) -> QuadratureResult:
    """Z_i = ∫ |w_i| exp(-n f) φ."""
    _require_2d(model)
    if coord not in (0, 1):
        raise ArgumentError(f"coordinate {coord} out of range [0, 2)")

    def log_integrand(pts: np.ndarray) -> np.ndarray:
        return log_unnormalized_density(model, pts) + np.log(np.abs(pts[..., coord]))

    return _integrate(model, spec, f"Z_{coord + 1}", log_integrand)


def quad_zeta(model: TargetModel, z: float, coord: Optional[int] = None, spec: QuadratureSpec = QuadratureSpec()) -> QuadratureResult:
    """ζ(z) = ∫ f^z φ, or ∫ f^z |w_i| φ when ``coord`` is given, for z > 0."""
    _require_2d(model)
    if not z > 0:
        raise ArgumentError(f"zeta quadrature needs z > 0, got {z}")
    if coord is not None and coord not in (0, 1):
        raise ArgumentError(f"coordinate {coord} out of range [0, 2)")

    def log_integrand(pts: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            values = z * np.log(potential_value(model, pts)) + model.prior.log_density(pts)
            if coord is not None:
                values = values + np.log(np.abs(pts[..., coord]))
        return values

    name = "zeta" if coord is None else f"zeta_{coord + 1}"
    return _integrate(model, spec, name, log_integrand)


def check_prior_normalization(model: TargetModel, spec: QuadratureSpec = QuadratureSpec(), tol: float = 1e-6) -> Optional[float]:
    """Mass of a StandardNormal prior on the quadrature box; None for custom priors."""
    if model.prior.kind != PriorKind.StandardNormal:
        return None

    def log_integrand(pts: np.ndarray) -> np.ndarray:
        return model.prior.log_density(pts)

    mass = _integrate(model, spec, "prior mass", log_integrand).value
    if abs(mass - 1.0) > tol:
        raise ModelContractError(f"{model.name}: prior integrates to {mass}, not 1")
    return mass


def _line_points(x: np.ndarray, coord: int, other_value: float) -> np.ndarray:
    pts = np.empty(x.shape + (2,))
    pts[..., coord] = x
    pts[..., 1 - coord] = other_value
    return pts


def _log_U(model: TargetModel, coord: int, sigma: float, spec: QuadratureSpec, res: _Resolution) -> float:
    """log U on one resolution."""
    grid = _axis(model, spec, res.outer)
    x, lw = grid.nodes, grid.log_weights
    log_grid = _log_grid(model, grid)  # [w1, w2]
    if coord == 1:
        log_grid = log_grid.T  # [coord, other]
    log_z = float(special.logsumexp(log_grid))
    cutoff = float(np.max(log_grid)) - PRUNE_LOG
    shared = sigma >= grid.max_panel / 4.0

    log_norm = -math.log(sigma * math.sqrt(2.0 * math.pi))
    if not shared:
        t = np.linspace(-spec.inner_half_width, spec.inner_half_width, res.inner)
        dt = t[1] - t[0]
        log_t_weights = np.log(np.full(res.inner, dt)) - 0.5 * t * t - 0.5 * math.log(2.0 * math.pi)
        log_t_weights[[0, -1]] -= math.log(2.0)

    def line(j: int) -> float:
        active = np.flatnonzero(log_grid[:, j] >= cutoff)
        if len(active) == 0:
            return -math.inf
        xa = x[active]
        lh = log_grid[active, j] - lw[active] - lw[j]  # log p on the line
        base = lh + lw[active] + lw[j]
        parts = []
        for rows in _row_blocks(len(active)):
            if shared:
                diff = xa[rows, None] - xa[None, :]
                terms = (
                    np.minimum(lh[rows, None], lh[None, :])
                    + log_norm
                    - 0.5 * (diff / sigma) ** 2
                    + lw[active][rows, None]
                    + lw[active][None, :]
                    + lw[j]
                )
            else:
                moved = xa[rows, None] + sigma * t[None, :]
                lh_moved = log_unnormalized_density(model, _line_points(moved, coord, x[j]))
                with np.errstate(invalid="ignore"):
                    log_ratio = np.minimum(lh_moved - lh[rows, None], 0.0)
                terms = base[rows, None] + log_ratio + log_t_weights[None, :]
            parts.append(special.logsumexp(terms))
        return float(special.logsumexp(parts))

    lines = np.array(_map_ordered(line, list(range(len(x)))))
    return float(special.logsumexp(lines)) - log_z


def oracle_U(model: TargetModel, coord: int, sigma: float, spec: QuadratureSpec = QuadratureSpec()) -> QuadratureResult:
    """U = ∫ dw p(w) ∫ dw'_i min(1, p(w')/p(w)) N(w'_i; w_i, σ²), by quadrature.

    For σ of at least a quarter panel the w'_i integral reuses the axis rule
    through the symmetric form ∫∫ min(p(w), p(w')) q(w'|w); for smaller σ it
    is a trapezoid rule on w_i ± 8σ.
    """
    _require_2d(model)
    if coord not in (0, 1):
        raise ArgumentError(f"coordinate {coord} out of range [0, 2)")
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ArgumentError(f"sigma must be a positive finite real, got {sigma}")

    full, half = (
        min(1.0, max(0.0, math.exp(_log_U(model, coord, sigma, spec, res))))
        for res in _resolutions(spec)
    )
    result = _with_error(f"U_{coord + 1}", full, half)
    logger.info(
        "Oracle acceptance rate",
        extra={"model": model.name, "coord": coord + 1, "n": model.n, "sigma": sigma, "U": result.value, "error": result.error_estimate},
    )
    return result
