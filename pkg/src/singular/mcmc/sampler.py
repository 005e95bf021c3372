"""Coordinate-wise Metropolis kernel, replica exchange over an n-ladder and acceptance accounting."""

import logging
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

import attrs
import numpy as np

from singular.mcmc import settings
from singular.mcmc.errors import ArgumentError, ModelContractError, NumericalError
from singular.mcmc.model import TargetModel, log_prior, potential_value

logger = logging.getLogger(__name__)


@attrs.frozen
class ProposalSpec:
    """One-coordinate Gaussian proposal w'_coord = w_coord + N(0, σ²)."""

    coord: int = attrs.field()
    sigma: float = attrs.field(converter=float)

    @coord.validator
    def _check_coord(self, attribute, value):
        if value < 0:
            raise ArgumentError(f"coordinate index must be >= 0, got {value}")

    @sigma.validator
    def _check_sigma(self, attribute, value):
        if not (value > 0 and math.isfinite(value)):
            raise ArgumentError(f"sigma must be a positive finite real, got {value}")


def _readonly(w) -> np.ndarray:
    arr = np.array(w, dtype=float)
    arr.setflags(write=False)
    return arr


@attrs.frozen
class ChainState:
    """Current point with cached f(w) and log φ(w)."""

    w: np.ndarray = attrs.field(converter=_readonly, eq=False)
    cached_potential: float
    cached_log_prior: float
    step_count: int = 0

    @classmethod
    def from_point(cls, model: TargetModel, w, step_count: int = 0) -> "ChainState":
        """Evaluate the caches at ``w``."""
        arr = _readonly(w)
        return cls(arr, potential_value(model, arr), log_prior(model, arr), step_count)

    def check(self, model: TargetModel) -> None:
        """Raise if the caches disagree with a fresh evaluation."""
        f = potential_value(model, self.w)
        lp = log_prior(model, self.w)
        if f != self.cached_potential or lp != self.cached_log_prior:
            raise ModelContractError(
                f"stale chain cache at w={self.w.tolist()}: "
                f"f={self.cached_potential} vs {f}, log prior={self.cached_log_prior} vs {lp}"
            )


class StepResult(NamedTuple):
    """Outcome of one Metropolis step."""

    state: ChainState
    u_value: float
    accepted: bool


def _check_coord(model: TargetModel, coord: int) -> None:
    if not 0 <= coord < model.dim:
        raise ArgumentError(f"{model.name}: coordinate {coord} out of range [0, {model.dim})")


def metropolis_step(
    model: TargetModel,
    state: ChainState,
    prop: ProposalSpec,
    rng: np.random.Generator,
    increment: Optional[float] = None,
) -> StepResult:
    """One Metropolis update of coordinate ``prop.coord``.

    Draws the N(0, σ²) increment (unless ``increment`` forces it), then a
    uniform. ``u_value`` is min(1, p(w')/p(w)) whatever the coin says.
    """
    _check_coord(model, prop.coord)
    if settings.sampler_settings.debug:
        state.check(model)

    step = prop.sigma * rng.standard_normal() if increment is None else float(increment)
    w_prime = state.w.copy()
    w_prime[prop.coord] += step
    f_prime = potential_value(model, w_prime)
    lp_prime = log_prior(model, w_prime)

    delta = -model.n * (f_prime - state.cached_potential) + (lp_prime - state.cached_log_prior)
    if math.isnan(delta) or delta == math.inf:
        raise NumericalError("non-finite log density difference", state.w, w_prime)
    u_value = 1.0 if delta >= 0 else math.exp(delta)

    accepted = bool(rng.random() < u_value)
    if accepted:
        new_state = ChainState(w_prime, f_prime, lp_prime, state.step_count + 1)
    else:
        new_state = attrs.evolve(state, step_count=state.step_count + 1)
    return StepResult(new_state, u_value, accepted)


def swap_probability(n_a: float, n_b: float, f_a: float, f_b: float) -> float:
    """min(1, exp((n_a - n_b)(f_a - f_b)))."""
    exponent = (n_a - n_b) * (f_a - f_b)
    if not math.isfinite(exponent):
        raise NumericalError(
            f"non-finite swap exponent for n=({n_a}, {n_b}), f=({f_a}, {f_b})"
        )
    return 1.0 if exponent >= 0 else math.exp(exponent)


@attrs.frozen
class AcceptanceRecord:
    """Acceptance statistics of one proposal at one rung."""

    coord: int
    sigma: float
    n: float
    proposals: int
    accepts: int
    mean_u: float
    stderr: float
    accept_rate: float
    accept_stderr: float
    n_batches: int

    def __attrs_post_init__(self):
        if self.accepts > self.proposals:
            raise ModelContractError(f"accepts {self.accepts} > proposals {self.proposals}")


def _batch_stderr(sums: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Batch-means standard error along axis 0."""
    means = sums / counts.reshape((-1,) + (1,) * (sums.ndim - 1))
    nb = means.shape[0]
    return np.std(means, axis=0, ddof=1) / math.sqrt(nb)


@attrs.define
class AcceptanceTally:
    """Per-batch sums of u and accept indicators, shape (batches, rungs, proposals)."""

    u_sum: np.ndarray
    accept_sum: np.ndarray
    counts: np.ndarray

    @classmethod
    def empty(cls, n_batches: int, rungs: int, proposals: int) -> "AcceptanceTally":
        """Zeroed tally."""
        return cls(
            np.zeros((n_batches, rungs, proposals)),
            np.zeros((n_batches, rungs, proposals), dtype=np.int64),
            np.zeros(n_batches, dtype=np.int64),
        )

    def records(self, coords: Sequence[int], sigma: np.ndarray, n_values: np.ndarray) -> List[List[AcceptanceRecord]]:
        """One record per (rung, proposal)."""
        total = int(self.counts.sum())
        u_total = self.u_sum.sum(axis=0)
        a_total = self.accept_sum.sum(axis=0)
        u_err = _batch_stderr(self.u_sum, self.counts)
        a_err = _batch_stderr(self.accept_sum.astype(float), self.counts)
        out = []
        for r in range(self.u_sum.shape[1]):
            row = []
            for p, coord in enumerate(coords):
                row.append(
                    AcceptanceRecord(
                        coord=int(coord),
                        sigma=float(sigma[r, p]),
                        n=float(n_values[r]),
                        proposals=total,
                        accepts=int(a_total[r, p]),
                        mean_u=min(1.0, max(0.0, float(u_total[r, p] / total))),
                        stderr=float(u_err[r, p]),
                        accept_rate=float(a_total[r, p] / total),
                        accept_stderr=float(a_err[r, p]),
                        n_batches=len(self.counts),
                    )
                )
            out.append(row)
        return out


@attrs.define
class SwapStatistics:
    """Swap attempts and accepts per adjacent rung pair."""

    attempts: np.ndarray
    accepts: np.ndarray

    @classmethod
    def empty(cls, rungs: int) -> "SwapStatistics":
        """Zeroed statistics for ``rungs`` rungs."""
        pairs = max(rungs - 1, 0)
        return cls(np.zeros(pairs, dtype=np.int64), np.zeros(pairs, dtype=np.int64))

    @property
    def rates(self) -> np.ndarray:
        """Accept rate per pair (nan when never attempted)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.attempts > 0, self.accepts / np.maximum(self.attempts, 1), np.nan)

    def to_dict(self) -> dict:
        """JSON friendly view."""
        return {
            "attempts": self.attempts.tolist(),
            "accepts": self.accepts.tolist(),
            "rates": [None if math.isnan(x) else float(x) for x in self.rates],
        }


class ChainEnsemble:
    """Lock-step Metropolis chains, one per rung, with optional replica swaps.

    Rung r targets exp(-n_r f) φ. Every sweep applies each proposal once, in
    order, to every rung. Each rung draws from its own random stream; swaps
    draw from a separate stream. With a single rung and no swaps the
    caller's generator is used directly.
    """

    def __init__(
        self,
        model: TargetModel,
        n_values: Sequence[float],
        proposals: Sequence[ProposalSpec],
        rng: np.random.Generator,
        init: Optional[np.ndarray] = None,
        swap_interval: Optional[int] = None,
    ):
        """Draw initial states (from the prior unless ``init`` is given)."""
        self.model = model
        self.n_values = np.asarray(n_values, dtype=float)
        if self.n_values.ndim != 1 or len(self.n_values) == 0:
            raise ArgumentError("need at least one rung")
        if np.any(~np.isfinite(self.n_values)) or np.any(self.n_values <= 0):
            raise ArgumentError(f"rung scales must be positive finite, got {self.n_values.tolist()}")
        if not proposals:
            raise ArgumentError("need at least one proposal")
        for prop in proposals:
            _check_coord(model, prop.coord)
        if swap_interval is not None and swap_interval < 1:
            raise ArgumentError(f"swap_interval must be >= 1, got {swap_interval}")

        self.rungs = len(self.n_values)
        self.coords = tuple(int(p.coord) for p in proposals)
        self.sigma = np.array([[p.sigma for p in proposals]] * self.rungs, dtype=float)
        self.swap_interval = swap_interval if self.rungs > 1 else None

        if self.rungs == 1 and self.swap_interval is None:
            self.streams = [rng]
            self.swap_stream = None
        else:
            children = rng.spawn(self.rungs + 1)
            self.streams = children[: self.rungs]
            self.swap_stream = children[self.rungs]

        if init is None:
            w = np.stack([model.prior.sampler(stream) for stream in self.streams])
        else:
            w = np.broadcast_to(np.asarray(init, dtype=float), (self.rungs, model.dim)).copy()
        self.w = w.reshape(self.rungs, model.dim)
        self.f = np.asarray(potential_value(model, self.w), dtype=float).reshape(self.rungs)
        self.lp = np.asarray(log_prior(model, self.w), dtype=float).reshape(self.rungs)
        if np.any(np.isneginf(self.lp)):
            raise ArgumentError("initial state outside the prior support")
        self.step_count = 0
        self.swaps = SwapStatistics.empty(self.rungs)
        self._parity = 0

    def set_sigma(self, sigma) -> None:
        """Replace step sizes; ``sigma`` broadcasts to (rungs, proposals)."""
        new = np.broadcast_to(np.asarray(sigma, dtype=float), self.sigma.shape).copy()
        if np.any(~np.isfinite(new)) or np.any(new <= 0):
            raise ArgumentError(f"sigma must be positive finite, got {new.tolist()}")
        self.sigma = new

    def states(self) -> List[ChainState]:
        """Current per-rung states."""
        return [
            ChainState(self.w[r], float(self.f[r]), float(self.lp[r]), self.step_count)
            for r in range(self.rungs)
        ]

    def _prefetch(self, sweeps: int) -> Tuple[np.ndarray, np.ndarray]:
        shape = (sweeps, len(self.coords))
        normals = []
        uniforms = []
        for stream in self.streams:
            normals.append(stream.standard_normal(shape))
            uniforms.append(stream.random(shape))
        return np.stack(normals, axis=1), np.stack(uniforms, axis=1)

    def _update(self, p: int, z: np.ndarray, coin: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        coord = self.coords[p]
        w_prime = self.w.copy()
        w_prime[:, coord] += self.sigma[:, p] * z
        f_prime = np.asarray(potential_value(self.model, w_prime), dtype=float).reshape(self.rungs)
        lp_prime = np.asarray(log_prior(self.model, w_prime), dtype=float).reshape(self.rungs)

        with np.errstate(invalid="ignore", over="ignore"):
            delta = -self.n_values * (f_prime - self.f) + (lp_prime - self.lp)
        bad = np.isnan(delta) | (delta == np.inf)
        if np.any(bad):
            r = int(np.flatnonzero(bad)[0])
            raise NumericalError("non-finite log density difference", self.w[r], w_prime[r])

        u = np.exp(np.minimum(delta, 0.0))
        accepted = coin < u
        self.w[accepted] = w_prime[accepted]
        self.f[accepted] = f_prime[accepted]
        self.lp[accepted] = lp_prime[accepted]
        return u, accepted

    def _swap(self) -> None:
        first = self._parity
        self._parity = 1 - self._parity
        pairs = range(first, self.rungs - 1, 2)
        if not pairs:
            return
        coins = self.swap_stream.random(len(pairs))
        for coin, a in zip(coins, pairs):
            b = a + 1
            prob = swap_probability(self.n_values[a], self.n_values[b], self.f[a], self.f[b])
            self.swaps.attempts[a] += 1
            if coin < prob:
                self.swaps.accepts[a] += 1
                self.w[[a, b]] = self.w[[b, a]]
                self.f[[a, b]] = self.f[[b, a]]
                self.lp[[a, b]] = self.lp[[b, a]]

    def _check_caches(self) -> None:
        for state in self.states():
            state.check(self.model)

    def run(self, sweeps: int, burn_in: int = 0, n_batches: Optional[int] = None) -> List[List[AcceptanceRecord]]:
        """Advance ``sweeps`` sweeps; tally the ones after ``burn_in``.

        Returns records indexed [rung][proposal]. Swaps, if enabled, are
        attempted after every ``swap_interval`` sweeps, alternating between
        even and odd adjacent pairs.
        """
        if not 0 <= burn_in < sweeps:
            raise ArgumentError(f"need sweeps > burn_in >= 0, got sweeps={sweeps}, burn_in={burn_in}")
        nb = n_batches or settings.sampler_settings.n_batches
        measured = sweeps - burn_in
        if measured < nb:
            raise ArgumentError(f"{measured} measured sweeps cannot fill {nb} batches")

        debug = settings.sampler_settings.debug
        block = settings.sampler_settings.random_block
        tally = AcceptanceTally.empty(nb, self.rungs, len(self.coords))

        logger.debug(
            "Running chain ensemble",
            extra={"model": self.model.name, "rungs": self.rungs, "sweeps": sweeps, "burn_in": burn_in},
        )
        normals = uniforms = None
        for k in range(sweeps):
            j = k % block
            if j == 0:
                normals, uniforms = self._prefetch(min(block, sweeps - k))

            measuring = k >= burn_in
            if measuring:
                b = (k - burn_in) * nb // measured
                tally.counts[b] += 1
            for p in range(len(self.coords)):
                u, accepted = self._update(p, normals[j, :, p], uniforms[j, :, p])
                if measuring:
                    tally.u_sum[b, :, p] += u
                    tally.accept_sum[b, :, p] += accepted
            self.step_count += len(self.coords)

            if self.swap_interval is not None and (k + 1) % self.swap_interval == 0:
                self._swap()
            if debug:
                self._check_caches()

        return tally.records(self.coords, self.sigma, self.n_values)


def _check_sweeps(sweeps: int, burn_in: Optional[int]) -> int:
    if burn_in is None:
        burn_in = sweeps // 10
    if not 0 <= burn_in < sweeps:
        raise ArgumentError(f"need sweeps > burn_in >= 0, got sweeps={sweeps}, burn_in={burn_in}")
    return burn_in


def run_chain(
    model: TargetModel,
    init,
    props: Sequence[ProposalSpec],
    sweeps: int,
    burn_in: Optional[int],
    rng: np.random.Generator,
) -> Tuple[ChainState, List[AcceptanceRecord]]:
    """Single chain at ``model.n``; one record per proposal.

    ``init=None`` draws the start from the prior; ``burn_in=None`` uses 10%.
    """
    burn_in = _check_sweeps(sweeps, burn_in)
    ensemble = ChainEnsemble(model, [model.n], props, rng, init=init)
    records = ensemble.run(sweeps, burn_in)
    return ensemble.states()[0], records[0]


@attrs.frozen
class ReplicaLadder:
    """Rung scales, final states and swap counters of a replica run."""

    n_values: Tuple[float, ...]
    states: Tuple[ChainState, ...]
    swap_interval: int
    swap_attempts: Tuple[int, ...]
    swap_accepts: Tuple[int, ...]


class ReplicaResult(NamedTuple):
    """Records indexed [rung][proposal] plus swap statistics."""

    records: List[List[AcceptanceRecord]]
    swaps: SwapStatistics
    ladder: ReplicaLadder


def check_ladder(n_values: Sequence[float]) -> Tuple[float, ...]:
    """Validate a strictly increasing ladder of positive scales."""
    values = tuple(float(x) for x in n_values)
    if len(values) < 2:
        raise ArgumentError(f"replica exchange needs >= 2 rungs, got {len(values)}")
    if any(not (x > 0 and math.isfinite(x)) for x in values):
        raise ArgumentError(f"rung scales must be positive finite, got {list(values)}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ArgumentError(f"ladder must be strictly increasing, got {list(values)}")
    return values


def replica_exchange_run(
    model: TargetModel,
    n_values: Sequence[float],
    proposals: Sequence[ProposalSpec],
    sweeps: int,
    rng: np.random.Generator,
    swap_interval: int = 1,
    burn_in: Optional[int] = None,
    init=None,
) -> ReplicaResult:
    """Replica exchange over the family ``model.with_n(n)`` for n in ``n_values``."""
    values = check_ladder(n_values)
    if swap_interval < 1:
        raise ArgumentError(f"swap_interval must be >= 1, got {swap_interval}")
    burn_in = _check_sweeps(sweeps, burn_in)

    ensemble = ChainEnsemble(model, values, proposals, rng, init=init, swap_interval=swap_interval)
    records = ensemble.run(sweeps, burn_in)
    ladder = ReplicaLadder(
        n_values=values,
        states=tuple(ensemble.states()),
        swap_interval=swap_interval,
        swap_attempts=tuple(int(x) for x in ensemble.swaps.attempts),
        swap_accepts=tuple(int(x) for x in ensemble.swaps.accepts),
    )
    logger.info(
        "Replica exchange finished",
        extra={
            "model": model.name,
            "rungs": len(values),
            "sweeps": sweeps,
            "swap_rates": [round(float(x), 4) for x in np.nan_to_num(ensemble.swaps.rates)],
        },
    )
    return ReplicaResult(records, ensemble.swaps, ladder)
