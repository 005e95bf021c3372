import math

import numpy as np
import pytest

from singular.mcmc import settings
from singular.mcmc.errors import ArgumentError, ModelContractError, NumericalError
from singular.mcmc.model import TargetModel, custom_prior, load_model, standard_normal_prior, zero_potential
from singular.mcmc.sampler import (
    ChainEnsemble,
    ChainState,
    ProposalSpec,
    metropolis_step,
    replica_exchange_run,
    run_chain,
    swap_probability,
)

FLAT_U_SIGMA_10 = 2.0 / math.pi * math.atan(0.2)


def test_proposal_spec_validation():
    with pytest.raises(ArgumentError):
        ProposalSpec(0, 0.0)
    with pytest.raises(ArgumentError):
        ProposalSpec(0, float("nan"))
    with pytest.raises(ArgumentError):
        ProposalSpec(-1, 1.0)


def test_step_to_higher_density_is_accepted(rng):
    model = load_model("w2w2", 1.0)
    state = ChainState.from_point(model, (1.0, 1.0))
    result = metropolis_step(model, state, ProposalSpec(0, 1.0), rng, increment=-1.0)
    assert result.u_value == 1.0
    assert result.accepted
    np.testing.assert_array_equal(result.state.w, [0.0, 1.0])
    assert result.state.cached_potential == 0.0
    assert result.state.step_count == 1


def test_forced_increment_u_value(rng):
    model = load_model("w2w2", 1e4)
    delta = 1e-4
    state = ChainState.from_point(model, (1.0, 1.0))
    result = metropolis_step(model, state, ProposalSpec(0, 1.0), rng, increment=delta)
    d_f = (1 + delta) ** 2 - 1
    expected = math.exp(-1e4 * d_f - 0.5 * d_f)
    assert result.u_value == pytest.approx(expected, rel=1e-10)


def test_rejected_step_leaves_state_untouched(rng):
    model = load_model("w2w2", 1e8)
    state = ChainState.from_point(model, (1.0, 1.0), step_count=7)
    result = metropolis_step(model, state, ProposalSpec(0, 1.0), rng, increment=1.0)
    assert result.u_value == 0.0
    assert not result.accepted
    assert result.state.w.tobytes() == state.w.tobytes()
    assert result.state.cached_potential == state.cached_potential
    assert result.state.step_count == 8


def test_state_is_read_only(w2w2):
    state = ChainState.from_point(w2w2, (1.0, 2.0))
    with pytest.raises(ValueError):
        state.w[0] = 5.0


def test_stale_cache_detected(w2w2, rng, monkeypatch):
    state = ChainState(np.array([1.0, 1.0]), cached_potential=0.5, cached_log_prior=0.0)
    with pytest.raises(ModelContractError):
        state.check(w2w2)

    monkeypatch.setattr(settings.sampler_settings, "debug", True)
    with pytest.raises(ModelContractError):
        metropolis_step(w2w2, state, ProposalSpec(0, 1.0), rng)


def test_nan_density_is_numerical_error(rng):
    model = TargetModel(
        dim=1,
        potential=lambda w: np.where(w[..., 0] > 5.0, np.inf, 0.0),
        prior=standard_normal_prior(1),
        n=1.0,
        name="wall",
    )
    state = ChainState.from_point(model, (6.0,))
    with pytest.raises(NumericalError) as excinfo:
        metropolis_step(model, state, ProposalSpec(0, 1.0), rng, increment=0.5)
    assert excinfo.value.w == [6.0]
    assert excinfo.value.w_prime == [6.5]


def test_flat_target_acceptance(flat, rng):
    props = [ProposalSpec(0, 10.0), ProposalSpec(1, 10.0)]
    _, records = run_chain(flat, None, props, 30_000, 1_000, rng)
    for record in records:
        assert record.proposals == 29_000
        assert record.n_batches == 20
        assert record.mean_u == pytest.approx(FLAT_U_SIGMA_10, abs=0.02)
        assert abs(record.accept_rate - record.mean_u) <= 3.0 * math.hypot(record.stderr, record.accept_stderr)
        assert 0 < record.stderr < 0.02


def test_small_moves_on_a_box_always_accepted(rng):
    model = TargetModel(
        dim=2,
        potential=zero_potential,
        prior=custom_prior(
            lambda w: np.where(np.all(np.abs(w) <= 1.0, axis=-1), -math.log(4.0), -np.inf),
            lambda g: g.uniform(-1.0, 1.0, size=2),
        ),
        n=1.0,
    )
    _, records = run_chain(model, (0.0, 0.0), [ProposalSpec(0, 1e-4), ProposalSpec(1, 1e-4)], 2_000, 0, rng)
    for record in records:
        assert record.mean_u > 0.999


def test_run_chain_is_deterministic(w2w4):
    props = [ProposalSpec(0, 10.0), ProposalSpec(1, 10.0)]
    runs = [run_chain(w2w4, None, props, 2_000, 200, np.random.default_rng(11)) for _ in range(2)]
    (state_a, records_a), (state_b, records_b) = runs
    np.testing.assert_array_equal(state_a.w, state_b.w)
    assert records_a == records_b


def test_constant_offset_changes_nothing():
    plain = TargetModel(dim=2, potential=zero_potential, prior=standard_normal_prior(2), n=1.0)
    shifted_prior = standard_normal_prior(2)
    shifted = TargetModel(
        dim=2,
        potential=zero_potential,
        prior=custom_prior(lambda w: shifted_prior.log_density(w) + 5.0, shifted_prior.sampler),
        n=1.0,
    )
    props = [ProposalSpec(0, 3.0), ProposalSpec(1, 3.0)]
    state_a, records_a = run_chain(plain, None, props, 3_000, 0, np.random.default_rng(5))
    state_b, records_b = run_chain(shifted, None, props, 3_000, 0, np.random.default_rng(5))
    np.testing.assert_array_equal(state_a.w, state_b.w)
    for a, b in zip(records_a, records_b):
        assert a.accepts == b.accepts
        assert a.mean_u == pytest.approx(b.mean_u, rel=1e-12)


CELL_WEIGHTS = np.array([0.2, 0.3, 0.5])


@pytest.fixture
def three_cells():
    """Flat f on [0, 3) with piecewise constant prior CELL_WEIGHTS."""

    def log_density(w):
        cell = np.floor(w[..., 0])
        inside = (cell >= 0) & (cell <= 2)
        index = np.clip(cell, 0, 2).astype(int)
        return np.where(inside, np.log(CELL_WEIGHTS[index]), -np.inf)

    return TargetModel(
        dim=1,
        potential=zero_potential,
        prior=custom_prior(log_density, lambda g: g.uniform(0.0, 3.0, size=1)),
        n=1.0,
        name="cells",
    )


def assert_detailed_balance(counts):
    steps = counts.sum()
    flow = counts / steps
    assert np.max(np.abs(flow - flow.T)) < 1e-2
    np.testing.assert_allclose(counts.sum(axis=1) / steps, CELL_WEIGHTS, atol=0.03)


def test_detailed_balance_on_three_cells(three_cells):
    rng = np.random.default_rng(3)
    prop = ProposalSpec(0, 1.0)
    state = ChainState.from_point(three_cells, (2.5,))
    counts = np.zeros((3, 3))
    for _ in range(50_000):
        before = int(state.w[0])
        state = metropolis_step(three_cells, state, prop, rng).state
        counts[before, int(state.w[0])] += 1
    assert_detailed_balance(counts)


@pytest.mark.slow
def test_detailed_balance_of_ensemble_updates(three_cells):
    chains = 200
    ensemble = ChainEnsemble(three_cells, [1.0] * chains, [ProposalSpec(0, 1.0)], np.random.default_rng(4))
    counts = np.zeros((3, 3))
    for _ in range(5_000):
        before = np.floor(ensemble.w[:, 0]).astype(int)
        ensemble.run(1, n_batches=1)
        np.add.at(counts, (before, np.floor(ensemble.w[:, 0]).astype(int)), 1)
    assert counts.sum() == 1_000_000
    assert_detailed_balance(counts)


def test_swap_probability():
    assert swap_probability(1.0, 10.0, 0.1, 0.01) == pytest.approx(math.exp(-0.81), rel=1e-14)
    assert swap_probability(1.0, 10.0, 0.01, 0.1) == 1.0
    assert swap_probability(5.0, 5.0, 3.0, 0.0) == 1.0
    with pytest.raises(NumericalError):
        swap_probability(1.0, math.inf, 0.5, 0.1)


def test_equal_rungs_always_swap(w2w2, rng):
    ensemble = ChainEnsemble(w2w2, [100.0, 100.0], [ProposalSpec(0, 1.0)], rng, swap_interval=1)
    ensemble.run(40)
    assert ensemble.swaps.attempts.tolist() == [20]
    assert ensemble.swaps.accepts.tolist() == [20]


def test_swaps_between_equal_rungs_leave_acceptance_unchanged():
    model = load_model("w2w2", 100.0)
    props = [ProposalSpec(0, 1.0), ProposalSpec(1, 1.0)]
    swapped = ChainEnsemble(model, [100.0, 100.0], props, np.random.default_rng(21), swap_interval=1)
    records = swapped.run(20_000, 2_000)
    assert swapped.swaps.accepts.sum() == swapped.swaps.attempts.sum() == 10_000
    _, control = run_chain(model, None, props, 20_000, 2_000, np.random.default_rng(22))
    for rung in records:
        for record, reference in zip(rung, control):
            assert abs(record.mean_u - reference.mean_u) <= 3.0 * math.hypot(record.stderr, reference.stderr)


def test_swap_pairs_alternate(w2w2, rng):
    ensemble = ChainEnsemble(w2w2, [1.0, 10.0, 100.0, 1000.0], [ProposalSpec(0, 1.0)], rng, swap_interval=1)
    ensemble.run(40)
    assert ensemble.swaps.attempts.tolist() == [20, 20, 20]

    sparse = ChainEnsemble(w2w2, [1.0, 10.0, 100.0], [ProposalSpec(0, 1.0)], rng, swap_interval=4)
    sparse.run(40)
    assert sparse.swaps.attempts.tolist() == [5, 5]


def test_replica_exchange_run(w2w4, rng):
    ladder = [1.0, 10.0, 100.0, 1e3, 1e4]
    props = [ProposalSpec(0, 10.0), ProposalSpec(1, 10.0)]
    result = replica_exchange_run(w2w4, ladder, props, 4_000, rng)
    assert len(result.records) == len(ladder)
    for rung, n in zip(result.records, ladder):
        assert [r.n for r in rung] == [n, n]
        assert all(0.0 <= r.mean_u <= 1.0 for r in rung)
    assert result.ladder.n_values == tuple(ladder)
    assert len(result.ladder.states) == len(ladder)
    assert all(a > 0 for a in result.ladder.swap_attempts)
    assert np.all(result.swaps.rates > 0)
    assert result.swaps.to_dict()["attempts"] == list(result.ladder.swap_attempts)


@pytest.mark.parametrize("ladder", [[10.0], [10.0, 10.0], [100.0, 10.0], [0.0, 1.0]])
def test_replica_ladder_validation(w2w4, rng, ladder):
    with pytest.raises(ArgumentError):
        replica_exchange_run(w2w4, ladder, [ProposalSpec(0, 1.0)], 100, rng)


def test_run_validation(w2w4, rng):
    with pytest.raises(ArgumentError):
        run_chain(w2w4, None, [ProposalSpec(0, 1.0)], 100, 100, rng)
    with pytest.raises(ArgumentError):
        run_chain(w2w4, None, [ProposalSpec(0, 1.0)], 30, 20, rng)
    with pytest.raises(ArgumentError):
        run_chain(w2w4, None, [ProposalSpec(2, 1.0)], 100, 0, rng)


def test_set_sigma(w2w4, rng):
    ensemble = ChainEnsemble(w2w4, [1.0, 10.0], [ProposalSpec(0, 1.0), ProposalSpec(1, 2.0)], rng)
    ensemble.set_sigma([[3.0, 4.0], [5.0, 6.0]])
    records = ensemble.run(100)
    assert [[r.sigma for r in rung] for rung in records] == [[3.0, 4.0], [5.0, 6.0]]
    with pytest.raises(ArgumentError):
        ensemble.set_sigma(-1.0)


def test_debug_mode_from_environment(fresh_package, rng):
    settings_module, sampler_module = fresh_package(debug="TRUE", n_batches=25)
    assert settings_module.sampler_settings.debug
    model = load_model("w2w2", 100.0)
    _, records = sampler_module.run_chain(model, None, [sampler_module.ProposalSpec(0, 1.0)], 200, 0, rng)
    assert records[0].n_batches == 25
