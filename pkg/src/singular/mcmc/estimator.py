"""Exponent-gap fits, step-size autotuning and schedule verification."""

import logging
import math
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import attrs
import numpy as np

from singular.mcmc.errors import ArgumentError, FitError, ModelContractError, TuningError
from singular.mcmc.model import PoleSpectrum, TargetModel
from singular.mcmc.sampler import AcceptanceRecord, ChainEnsemble, ProposalSpec
from singular.mcmc.theory import classify_case, schedule_sigma

logger = logging.getLogger(__name__)


@attrs.frozen
class Measurement:
    """One measured acceptance rate (coord is 0-based)."""

    n: float = attrs.field(converter=float)
    sigma: float = attrs.field(converter=float)
    coord: int
    U: float = attrs.field(converter=float)
    stderr: float = attrs.field(converter=float)


@attrs.frozen
class MeasurementSet:
    """Measurements of one coordinate in the large-σ regime."""

    rows: Tuple[Measurement, ...] = attrs.field(converter=tuple)
    sigma_min: float = 10.0

    def __attrs_post_init__(self):
        if not self.rows:
            raise ArgumentError("measurement set is empty")
        for row in self.rows:
            if not row.n > math.e:
                raise ArgumentError(f"n must exceed e, got {row.n}")
            if not row.sigma >= self.sigma_min:
                raise ArgumentError(f"sigma {row.sigma} is below sigma_min={self.sigma_min}")
            if not 0 < row.U <= 1:
                raise ArgumentError(f"U must lie in (0, 1], got {row.U} at n={row.n}, sigma={row.sigma}")
            if not row.stderr > 0:
                raise ArgumentError(f"stderr must be positive, got {row.stderr} at n={row.n}")
        if len({row.coord for row in self.rows}) != 1:
            raise ArgumentError("all measurements must share one coordinate")

    @property
    def coord(self) -> int:
        """The shared coordinate."""
        return self.rows[0].coord

    @classmethod
    def from_records(cls, records: Iterable[AcceptanceRecord], sigma_min: float = 10.0) -> "MeasurementSet":
        """Build from sampler records."""
        return cls(
            [Measurement(r.n, r.sigma, r.coord, r.mean_u, r.stderr) for r in records],
            sigma_min,
        )

    @classmethod
    def from_rows(cls, rows: Iterable, sigma_min: float = 10.0) -> "MeasurementSet":
        """Build from results-CSV rows, whose ``coord`` is the 1-based label."""
        return cls(
            [Measurement(r.n, r.sigma, r.coord - 1, r.U, r.stderr) for r in rows],
            sigma_min,
        )


@attrs.frozen
class ExponentFit:
    """Estimated (λ_i - λ, m_i - m); covariance is over (intercept, Δλ, Δm)."""

    delta_lambda: float
    delta_m: float
    intercept: float
    covariance: np.ndarray = attrs.field(eq=False)
    residual_rms: float
    rows: int

    def to_dict(self) -> dict:
        """JSON friendly view."""
        return {
            "delta_lambda": self.delta_lambda,
            "delta_m": self.delta_m,
            "intercept": self.intercept,
            "covariance": self.covariance.tolist(),
            "residual_rms": self.residual_rms,
            "rows": self.rows,
        }


def fit_exponents(data: MeasurementSet) -> ExponentFit:
    """Weighted least squares of log U + log σ on [1, log n, log log n].

    Weights are 1/var(log U) = (U/stderr)².
    """
    if len({row.n for row in data.rows}) < 4:
        raise FitError("need at least 4 distinct n values to fit (delta_lambda, delta_m)")

    n = np.array([r.n for r in data.rows])
    U = np.array([r.U for r in data.rows])
    sigma = np.array([r.sigma for r in data.rows])
    stderr = np.array([r.stderr for r in data.rows])

    log_n = np.log(n)
    X = np.column_stack([np.ones_like(log_n), log_n, np.log(log_n)])
    y = np.log(U) + np.log(sigma)
    sqrt_w = U / stderr

    Xw = X * sqrt_w[:, None]
    yw = y * sqrt_w
    if np.linalg.matrix_rank(Xw) < 3:
        raise FitError("design matrix is rank deficient")
    beta, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    cov = np.linalg.inv(Xw.T @ Xw)
    J = np.diag([1.0, -1.0, 1.0])
    cov = J @ cov @ J
    cov = 0.5 * (cov + cov.T)

    residuals = y - X @ beta
    result = ExponentFit(
        delta_lambda=float(-beta[1]),
        delta_m=float(beta[2]),
        intercept=float(beta[0]),
        covariance=cov,
        residual_rms=float(np.sqrt(np.mean(residuals**2))),
        rows=len(y),
    )
    logger.info(
        "Exponent fit",
        extra={"coord": data.coord + 1, "delta_lambda": result.delta_lambda, "delta_m": result.delta_m},
    )
    return result


def default_ladder(n: float, per_decade: int = 1) -> List[float]:
    """Geometric helper ladder from 1 up to (and including) n."""
    if not n > 0:
        raise ArgumentError(f"n must be positive, got {n}")
    top = math.log10(n)
    if top <= 0:
        return [n]
    steps = int(math.floor(top * per_decade + 1e-9))
    values = [10.0 ** (k / per_decade) for k in range(steps + 1)]
    values = [v for v in values if v < n * (1 - 1e-12)]
    return values + [n]


def _rungs(n: float, ladder: Optional[Sequence[float]]) -> List[float]:
    if ladder is None:
        return default_ladder(n)
    return sorted({float(x) for x in ladder if x < n} | {float(n)})


def _proposals(model: TargetModel, coord: int, sigma: float, companion_sigma: float) -> List[ProposalSpec]:
    return [ProposalSpec(c, sigma if c == coord else companion_sigma) for c in range(model.dim)]


def measure_acceptance(
    model: TargetModel,
    coord: int,
    n: float,
    sigma: float,
    sweeps: int,
    rng: np.random.Generator,
    ladder: Optional[Sequence[float]] = None,
    companion_sigma: Optional[float] = None,
    swap_interval: int = 1,
    burn_in: Optional[int] = None,
) -> AcceptanceRecord:
    """Replica-assisted measurement of U for ``coord`` at (n, σ).

    Helper rungs come from ``ladder`` (those below n) or a decade ladder;
    every rung uses σ on every coordinate unless ``companion_sigma`` is set.
    """
    rungs = _rungs(n, ladder)
    props = _proposals(model, coord, sigma, companion_sigma or sigma)
    ensemble = ChainEnsemble(
        model, rungs, props, rng, swap_interval=swap_interval if len(rungs) > 1 else None
    )
    records = ensemble.run(sweeps, sweeps // 10 if burn_in is None else burn_in)
    return records[-1][coord]


@attrs.frozen
class TuneConfig:
    """Budget and gains of the step-size recursion."""

    iterations: int = 200
    sweeps: int = 500
    a0: float = 1.0
    k0: int = 20
    sigma0: float = 1.0
    sigma_min: float = 1e-8
    sigma_max: float = 1e8
    companion_sigma: float = 1.0
    ladder: Optional[Tuple[float, ...]] = attrs.field(default=None, converter=attrs.converters.optional(tuple))
    relative_error: bool = False
    max_log_step: float = 1.0
    burn_in: int = 500
    final_sweeps: int = 5000

    def __attrs_post_init__(self):
        if self.iterations < 1 or self.sweeps < 20 or self.final_sweeps < 20:
            raise ArgumentError("tuning needs iterations >= 1 and sweeps, final_sweeps >= 20")
        if not (0 < self.sigma_min <= self.sigma0 <= self.sigma_max):
            raise ArgumentError(
                f"need 0 < sigma_min <= sigma0 <= sigma_max, got {self.sigma_min}, {self.sigma0}, {self.sigma_max}"
            )
        if not (self.a0 > 0 and self.max_log_step > 0 and self.companion_sigma > 0):
            raise ArgumentError("a0, max_log_step and companion_sigma must be positive")
        if self.k0 < 0 or self.burn_in < 0:
            raise ArgumentError("k0 and burn_in must be nonnegative")


@attrs.frozen
class TuneResult:
    """Tuned σ*, the acceptance rate it achieves and the recursion trace."""

    sigma: float
    achieved_u: float
    stderr: float
    target_u: float
    trace: Tuple[Tuple[float, float], ...]

    def to_dict(self) -> dict:
        """JSON friendly view."""
        return {
            "sigma": self.sigma,
            "achieved_u": self.achieved_u,
            "stderr": self.stderr,
            "target_u": self.target_u,
            "trace": [list(step) for step in self.trace],
        }


def autotune_sigma(
    model: TargetModel,
    coord: int,
    n: float,
    target_u: float,
    config: TuneConfig = TuneConfig(),
    rng: Optional[np.random.Generator] = None,
) -> TuneResult:
    """Stochastic approximation on log σ towards ``target_u``.

    log σ_{k+1} = log σ_k + a_k (Û_k - target), a_k = a0 / max(1, k - k0),
    with the error divided by the target when ``relative_error`` is set.
    The chain state carries over between batches; the final σ is measured
    once more with ``final_sweeps`` sweeps.
    """
    if not 0 < target_u < 1:
        raise ArgumentError(f"target_u must lie in (0, 1), got {target_u}")
    if not 0 <= coord < model.dim:
        raise ArgumentError(f"coordinate {coord} out of range [0, {model.dim})")
    if rng is None:
        raise ArgumentError("autotune_sigma needs an explicit seeded generator")

    target_model = model.with_n(n)
    rungs = _rungs(n, config.ladder) if config.ladder is not None else [float(n)]
    props = _proposals(target_model, coord, config.sigma0, config.companion_sigma)
    ensemble = ChainEnsemble(
        target_model, rungs, props, rng, swap_interval=1 if len(rungs) > 1 else None
    )
    if config.burn_in > 0:
        ensemble.run(config.burn_in + 20, config.burn_in, n_batches=20)

    def measure(sigma: float, sweeps: int) -> AcceptanceRecord:
        ensemble.sigma[:, coord] = sigma
        return ensemble.run(sweeps)[-1][coord]

    log_sigma = math.log(config.sigma0)
    log_lo, log_hi = math.log(config.sigma_min), math.log(config.sigma_max)
    trace = []
    u_hat = float("nan")
    for k in range(1, config.iterations + 1):
        sigma = math.exp(log_sigma)
        u_hat = measure(sigma, config.sweeps).mean_u
        trace.append((sigma, u_hat))
        error = u_hat - target_u
        if config.relative_error:
            error /= target_u
        gain = config.a0 / max(1, k - config.k0)
        step = max(-config.max_log_step, min(config.max_log_step, gain * error))
        log_sigma = max(log_lo, min(log_hi, log_sigma + step))

    sigma_star = math.exp(log_sigma)
    final = measure(sigma_star, config.final_sweeps)

    at_max = log_sigma >= log_hi and final.mean_u > target_u
    at_min = log_sigma <= log_lo and final.mean_u < target_u
    if at_max or at_min:
        bound = "sigma_max" if at_max else "sigma_min"
        raise TuningError(
            f"step size stuck at {bound}={sigma_star:.6g} with U={final.mean_u:.4g} "
            f"vs target {target_u}",
            bound=bound,
            sigma=sigma_star,
        )

    logger.info(
        "Tuned step size",
        extra={"model": model.name, "coord": coord + 1, "n": n, "sigma": sigma_star, "U": final.mean_u, "target": target_u},
    )
    return TuneResult(sigma_star, final.mean_u, final.stderr, target_u, tuple(trace))


@attrs.frozen
class ScheduleRow:
    """One n of a schedule verification run."""

    n: float
    sigma: float
    U: float
    stderr: float


Measure = Callable[[float, float], Tuple[float, float]]


def schedule_verification(
    model: TargetModel,
    spec: PoleSpectrum,
    coord: int,
    n_grid: Sequence[float],
    A_const: float = 1.0,
    rng: Optional[np.random.Generator] = None,
    sweeps: int = 100_000,
    ladder: Optional[Sequence[float]] = None,
    measure: Optional[Measure] = None,
) -> List[ScheduleRow]:
    """Measure U along σ = schedule_sigma(case, n) for each n.

    ``measure(n, σ) -> (U, stderr)`` replaces the sampler (e.g. with
    ``theorem1_U`` for a dry run); by default each n gets an independent
    replica-assisted measurement.
    """
    grid = [float(x) for x in n_grid]
    if len(grid) < 4:
        raise ArgumentError(f"schedule verification needs >= 4 n values, got {len(grid)}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ArgumentError("n_grid must be strictly increasing")
    if model.spectrum is not None and model.spectrum != spec:
        raise ModelContractError(f"{model.name}: spectrum does not match the model's own")
    case = classify_case(spec, coord)

    if measure is None:
        if rng is None:
            raise ArgumentError("schedule verification needs a seeded generator")
        streams = iter(rng.spawn(len(grid)))

        def measure(n: float, sigma: float) -> Tuple[float, float]:
            record = measure_acceptance(model, coord, n, sigma, sweeps, next(streams), ladder)
            return record.mean_u, record.stderr

    rows = []
    for n in grid:
        sigma = schedule_sigma(case, spec, coord, n, A_const)
        u, err = measure(n, sigma)
        rows.append(ScheduleRow(n, sigma, float(u), float(err)))
        logger.info(
            "Schedule point",
            extra={"case": case.value, "coord": coord + 1, "n": n, "sigma": sigma, "U": u},
        )
    return rows
