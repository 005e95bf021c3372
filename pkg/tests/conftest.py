"""Shared fixtures."""

import sys

import numpy as np
import pytest

from singular.mcmc.model import TargetModel, load_model, standard_normal_prior, zero_potential
from singular.mcmc.oracle import QuadratureSpec


@pytest.fixture
def rng():
    """Seeded generator."""
    return np.random.default_rng(20240917)


@pytest.fixture
def w2w2():
    """w2w2 at n = 10^4."""
    return load_model("w2w2", 1e4)


@pytest.fixture
def w2w4():
    """w2w4 at n = 10^4."""
    return load_model("w2w4", 1e4)


@pytest.fixture
def flat():
    """f ≡ 0 with a standard normal prior, so p = φ."""
    return TargetModel(dim=2, potential=zero_potential, prior=standard_normal_prior(2), n=1.0, name="flat")


@pytest.fixture
def small_grid():
    """Quadrature grid small enough for unit tests."""
    return QuadratureSpec(outer_nodes=256, inner_nodes=128)


@pytest.fixture
def fresh_package(monkeypatch):
    """Import singular.mcmc anew under SINGULAR_MCMC_* variables.

    Cached modules are dropped with monkeypatch so the originals come back
    after the test.
    """

    def _load(**env):
        for key, value in env.items():
            monkeypatch.setenv(f"SINGULAR_MCMC_{key.upper()}", str(value))

        modules_to_clear = [key for key in sys.modules.keys() if key.startswith("singular.mcmc")]
        for module in modules_to_clear:
            monkeypatch.delitem(sys.modules, module)

        import singular.mcmc.sampler
        import singular.mcmc.settings

        return singular.mcmc.settings, singular.mcmc.sampler

    return _load
