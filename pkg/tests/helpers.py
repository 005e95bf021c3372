"""Functions to simplify writing tests."""

import csv
import math
from typing import Dict, List, Sequence

import numpy as np

from singular.mcmc.estimator import Measurement, MeasurementSet
from singular.mcmc.model import PoleSpectrum
from singular.mcmc.theory import theorem1_U


def read_csv(path) -> List[Dict[str, str]]:
    """Rows of a CSV file as dicts."""
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def synthetic_measurements(
    spec: PoleSpectrum,
    coord: int,
    n_values: Sequence[float],
    sigma: float = 1e3,
    noise: float = 0.0,
    rng=None,
    scale: float = 1.0,
) -> MeasurementSet:
    """Main-term acceptance rates with optional multiplicative log-normal noise."""
    rows = []
    for n in n_values:
        u = scale * theorem1_U(n, sigma, spec, coord)
        if noise:
            u *= math.exp(noise * rng.standard_normal())
        rows.append(Measurement(n, sigma, coord, u, max(noise, 0.01) * u))
    return MeasurementSet(rows)
