"""singular-mcmc command line driver."""

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import attrs
import numpy as np

from singular.mcmc import __version__, settings
from singular.mcmc.config import ExperimentConfig, FigureKind, Mode, load_config
from singular.mcmc.errors import ArgumentError, ConfigError, ModelContractError, SingularMCMCError, exit_code_for
from singular.mcmc.estimator import (
    MeasurementSet,
    TuneConfig,
    autotune_sigma,
    fit_exponents,
    schedule_verification,
)
from singular.mcmc.logger import configure_logging
from singular.mcmc.model import TargetModel, load_model
from singular.mcmc.oracle import QuadratureSpec, oracle_U, quad_Z, quad_Zi
from singular.mcmc.results import CsvWriter, ResultRow, ResultWriter, RunManifest, read_results, write_json
from singular.mcmc.sampler import AcceptanceRecord, ProposalSpec, replica_exchange_run, run_chain
from singular.mcmc.theory import FormulaId, classify_case, closed_form_for, predict, theorem1_U

logger = logging.getLogger(__name__)

FIGURE_HEADER = ("x", "U_mcmc", "stderr", "U_theory")
ORACLE_HEADER = ("model", "coord", "n", "sigma", "U", "U_error", "Z", "Z_error", "Zi", "Zi_error")
SCHEDULE_HEADER = ("model", "coord", "case", "n", "sigma", "U", "stderr")


def seeded_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for sub-task ``key`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@attrs.frozen
class CellTask:
    """One sampler run: every rung and coordinate at step size ``sigma``."""

    index: int
    model: str
    rungs: Tuple[float, ...]
    sigma: float
    sweeps: int
    burn_in: int
    swap_interval: int
    seed: int


@attrs.frozen
class CellResult:
    """Records indexed [rung][coord] of one cell."""

    index: int
    sigma: float
    records: List[List[AcceptanceRecord]]
    swaps: Optional[dict]


def run_cell(task: CellTask) -> CellResult:
    """Run one cell (also the process-pool entry point)."""
    model = load_model(task.model, task.rungs[-1])
    props = [ProposalSpec(c, task.sigma) for c in range(model.dim)]
    rng = seeded_rng(task.seed, task.index)
    if len(task.rungs) > 1:
        result = replica_exchange_run(
            model, task.rungs, props, task.sweeps, rng, task.swap_interval, task.burn_in
        )
        return CellResult(task.index, task.sigma, result.records, result.swaps.to_dict())
    _, records = run_chain(model, None, props, task.sweeps, task.burn_in, rng)
    return CellResult(task.index, task.sigma, [records], None)


def run_cells(tasks: Sequence[CellTask]) -> List[CellResult]:
    """Run cells on a process pool; results come back ordered by index."""
    workers = min(settings.sampler_settings.threads, len(tasks))
    logger.info("Dispatching cells", extra={"cells": len(tasks), "workers": workers})
    if workers <= 1:
        return [run_cell(task) for task in tasks]

    results = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_cell, task) for task in tasks]
        try:
            for future in as_completed(futures):
                results.append(future.result())
        except BaseException:
            for future in futures:
                future.cancel()
            raise
    return sorted(results, key=lambda r: r.index)


def _rungs(config: ExperimentConfig, n_values: Sequence[float]) -> Tuple[float, ...]:
    top = max(n_values)
    helpers = [x for x in config.ladder_values() if x <= top]
    return tuple(sorted(set(helpers) | {float(x) for x in n_values}))


def _cells(config: ExperimentConfig, rungs: Tuple[float, ...], sigmas: Sequence[float]) -> List[CellTask]:
    return [
        CellTask(
            index=i,
            model=config.model,
            rungs=rungs,
            sigma=float(sigma),
            sweeps=config.sweeps,
            burn_in=config.resolved_burn_in,
            swap_interval=config.swap_interval,
            seed=config.seed,
        )
        for i, sigma in enumerate(sigmas)
    ]


def _model(config: ExperimentConfig, n: float = 1.0) -> TargetModel:
    return load_model(config.model, n)


def _spectrum(config: ExperimentConfig):
    spectrum = _model(config).spectrum
    if spectrum is None:
        raise ModelContractError(f"{config.model} has no pole spectrum; theory modes need one")
    return spectrum


def sample_mode(config: ExperimentConfig, out: Path, manifest: RunManifest) -> None:
    """One replica run per σ over ladder ∪ n_grid; one row per (σ, coord, n)."""
    rungs = _rungs(config, config.n_grid)
    results = run_cells(_cells(config, rungs, config.sigma_grid))

    with ResultWriter(manifest.track("results.csv")) as writer:
        for cell in results:
            for label in config.coords:
                for n in config.n_grid:
                    record = cell.records[rungs.index(float(n))][label - 1]
                    writer.append_row(
                        ResultRow(config.model, label, n, cell.sigma, record.mean_u, record.stderr, "mcmc", config.seed, config.sweeps)
                    )
    manifest.complete("results.csv")

    write_json(
        manifest.track("swaps.json"),
        {"rungs": list(rungs), "cells": [{"sigma": c.sigma, "swaps": c.swaps} for c in results]},
    )
    manifest.complete("swaps.json")


def theory_mode(config: ExperimentConfig, out: Path, manifest: RunManifest) -> None:
    """Closed-form row (when one exists) and main-term row per (coord, n, σ)."""
    spectrum = _spectrum(config)
    with ResultWriter(manifest.track("results.csv")) as writer:
        for label in config.coords:
            coord = label - 1
            formulas = [f for f in (closed_form_for(config.model, coord), FormulaId.Theorem1Main) if f is not None]
            for n in config.n_grid:
                for sigma in config.sigma_grid:
                    for formula in formulas:
                        value = predict(formula, n, sigma, spectrum, coord, config.c_const).value
                        writer.append_row(
                            ResultRow(config.model, label, n, sigma, value, None, f"theory:{formula.value}", config.seed)
                        )
    manifest.complete("results.csv")


def _quadrature_spec(config: ExperimentConfig) -> QuadratureSpec:
    return QuadratureSpec(**config.quadrature.model_dump())


def oracle_mode(config: ExperimentConfig, out: Path, manifest: RunManifest) -> None:
    """Quadrature U, Z and Z_i per (coord, n, σ)."""
    spec = _quadrature_spec(config)
    with ResultWriter(manifest.track("results.csv")) as writer, CsvWriter(manifest.track("oracle.csv"), ORACLE_HEADER) as detail:
        for label in config.coords:
            coord = label - 1
            for n in config.n_grid:
                model = _model(config, n)
                z = quad_Z(model, spec)
                zi = quad_Zi(model, coord, spec)
                for sigma in config.sigma_grid:
                    u = oracle_U(model, coord, sigma, spec)
                    writer.append_row(ResultRow(config.model, label, n, sigma, u.value, None, "oracle", config.seed))
                    detail.append(
                        [config.model, str(label), n, sigma, u.value, u.error_estimate, z.value, z.error_estimate, zi.value, zi.error_estimate]
                    )
    manifest.complete("results.csv")
    manifest.complete("oracle.csv")


def fit_mode(config: ExperimentConfig, out: Path, manifest: RunManifest) -> None:
    """Fit (Δλ, Δm) per coordinate from mcmc rows of a results CSV."""
    path = Path(config.measurements_path) if config.measurements_path else out / "results.csv"
    if not path.exists():
        raise ConfigError(f"measurements file {path} does not exist")
    rows = [r for r in read_results(path) if r.source == "mcmc" and r.model == config.model]
    spectrum = _model(config).spectrum

    fits = {}
    for label in config.coords:
        usable = [r for r in rows if r.coord == label and r.sigma >= config.sigma_min and r.n > math.e]
        logger.info(
            "Fitting exponents",
            extra={"coord": label, "rows": len(usable), "dropped": sum(r.coord == label for r in rows) - len(usable)},
        )
        entry = fit_exponents(MeasurementSet.from_rows(usable, config.sigma_min)).to_dict()
        if spectrum is not None:
            d_lam, d_m = spectrum.gap(label - 1)
            entry["expected"] = {"delta_lambda": float(d_lam), "delta_m": d_m}
        fits[f"w{label}"] = entry

    write_json(manifest.track("fit.json"), {"model": config.model, "source": str(path), "fits": fits})
    manifest.complete("fit.json")


def _tune_config(config: ExperimentConfig) -> TuneConfig:
    section = config.tune.model_dump()
    use_ladder = section.pop("use_ladder")
    return TuneConfig(**section, ladder=config.ladder_values() if use_ladder else None)


def tune_mode(config: ExperimentConfig, out: Path, manifest: RunManifest) -> None:
    """Tune σ* per (coord, n) towards ``target_u``."""
    tune_config = _tune_config(config)
    entries = []
    index = 0
    for label in config.coords:
        for n in config.n_grid:
            result = autotune_sigma(
                _model(config, n), label - 1, n, config.target_u, tune_config, seeded_rng(config.seed, index)
            )
            entry = result.to_dict()
            entry.update({"coord": label, "n": n})
            entries.append(entry)
            index += 1
    write_json(manifest.track("tune.json"), {"model": config.model, "results": entries})
    manifest.complete("tune.json")


def _schedule_rows(config: ExperimentConfig, label: int):
    spectrum = _spectrum(config)
    grid = [n for n in config.n_grid if n > math.e]
    return classify_case(spectrum, label - 1), schedule_verification(
        _model(config),
        spectrum,
        label - 1,
        grid,
        config.a_const,
        rng=seeded_rng(config.seed, label),
        sweeps=config.sweeps,
        ladder=config.ladder_values(),
    )


def schedule_mode(config: ExperimentConfig, out: Path, manifest: RunManifest) -> None:
    """Measured U along the constant-acceptance schedule."""
    with ResultWriter(manifest.track("results.csv")) as writer, CsvWriter(manifest.track("schedule.csv"), SCHEDULE_HEADER) as table:
        for label in config.coords:
            case, rows = _schedule_rows(config, label)
            for row in rows:
                table.append([config.model, str(label), case.value, row.n, row.sigma, row.U, row.stderr])
                writer.append_row(
                    ResultRow(config.model, label, row.n, row.sigma, row.U, row.stderr, "mcmc", config.seed, config.sweeps)
                )
    manifest.complete("results.csv")
    manifest.complete("schedule.csv")


def anchor_theory(u_mcmc: Sequence[float], u_theory: Sequence[float]) -> List[float]:
    """Rescale the theory curve to the simulated value at its right-most nonzero point.

    Simulated rates underflow to 0 at large σ, so zero points are skipped.
    """
    if not u_mcmc or len(u_mcmc) != len(u_theory):
        raise ArgumentError("anchoring needs equally long, non-empty curves")
    usable = [i for i, (u, t) in enumerate(zip(u_mcmc, u_theory)) if u > 0 and t > 0]
    if not usable:
        raise ArgumentError("no point with a nonzero simulated and theoretical rate to anchor on")
    k = usable[-1]
    scale = u_mcmc[k] / u_theory[k]
    anchored = [t * scale for t in u_theory]
    anchored[k] = u_mcmc[k]
    return anchored


def _figure_series(kind: FigureKind, config: ExperimentConfig) -> Dict[int, List[Tuple[float, float, float, float]]]:
    """Per coordinate label: (x, U_mcmc, stderr, raw theory) sorted by x."""
    spectrum = _spectrum(config)
    series: Dict[int, List[Tuple[float, float, float, float]]] = {}

    if kind == FigureKind.fig1:
        n = config.figure_n
        sigmas = sorted(config.sigma_grid)
        rungs = _rungs(config, [n])
        cells = run_cells(_cells(config, rungs, sigmas))
        for label in config.coords:
            series[label] = [
                (
                    cell.sigma,
                    cell.records[-1][label - 1].mean_u,
                    cell.records[-1][label - 1].stderr,
                    theorem1_U(n, cell.sigma, spectrum, label - 1, config.c_const),
                )
                for cell in cells
            ]
    elif kind == FigureKind.fig2:
        sigma = config.figure_sigma
        grid = sorted(n for n in config.n_grid if n > math.e)
        if not grid:
            raise ArgumentError("fig2 needs n_grid values above e")
        rungs = _rungs(config, grid)
        (cell,) = run_cells(_cells(config, rungs, [sigma]))
        for label in config.coords:
            series[label] = [
                (
                    n,
                    cell.records[rungs.index(n)][label - 1].mean_u,
                    cell.records[rungs.index(n)][label - 1].stderr,
                    theorem1_U(n, sigma, spectrum, label - 1, config.c_const),
                )
                for n in grid
            ]
    else:
        for label in config.coords:
            _, rows = _schedule_rows(config, label)
            series[label] = [
                (row.n, row.U, row.stderr, theorem1_U(row.n, row.sigma, spectrum, label - 1, config.a_const))
                for row in rows
            ]
    return series


def emit_fig_data(kind: FigureKind, config: ExperimentConfig, out: Path, manifest: RunManifest) -> List[Path]:
    """Write fig<k>_<model>_w<coord>.csv with columns x, U_mcmc, stderr, U_theory."""
    kind = FigureKind(kind)
    paths = []
    for label, points in _figure_series(kind, config).items():
        name = f"{kind.value}_{config.model}_w{label}.csv"
        anchored = anchor_theory([p[1] for p in points], [p[3] for p in points])
        with CsvWriter(manifest.track(name), FIGURE_HEADER) as writer:
            for (x, u, err, _), theory in zip(points, anchored):
                writer.append([x, u, err, theory])
        manifest.complete(name)
        paths.append(out / name)
    return paths


def figure_mode(config: ExperimentConfig, out: Path, manifest: RunManifest) -> None:
    """Figure data for ``config.figure``."""
    emit_fig_data(config.figure, config, out, manifest)


MODES: Dict[Mode, Callable[[ExperimentConfig, Path, RunManifest], None]] = {
    Mode.sample: sample_mode,
    Mode.theory: theory_mode,
    Mode.oracle: oracle_mode,
    Mode.fit: fit_mode,
    Mode.tune: tune_mode,
    Mode.schedule: schedule_mode,
    Mode.figure: figure_mode,
}


def run(config: ExperimentConfig) -> int:
    """Execute ``config``; always writes manifest.json. Returns the exit status."""
    out = Path(config.output_path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out, config.echo())
    logger.info(
        "Starting run",
        extra={"mode": config.mode.value, "model": config.model, "seed": config.seed, "out": str(out)},
    )
    try:
        MODES[config.mode](config, out, manifest)
        manifest.status = "ok"
        code = 0
    except SingularMCMCError as exc:
        logger.error(str(exc), extra={"mode": config.mode.value, "error_type": type(exc).__name__})
        manifest.fail(exc)
        code = exit_code_for(exc)
    except Exception as exc:
        logger.exception("Unexpected failure", extra={"mode": config.mode.value})
        manifest.fail(exc)
        code = 1
    manifest.write()
    return code


def build_parser() -> argparse.ArgumentParser:
    """Argument parser."""
    modes = [m.value for m in Mode]
    parser = argparse.ArgumentParser(
        prog="singular-mcmc",
        description="Metropolis sampling and acceptance-rate theory for singular targets",
    )
    parser.add_argument("mode", choices=modes + ["run"], help="what to run ('run' reads --mode or the config)")
    parser.add_argument("--mode", dest="run_mode", choices=modes, help="mode when using 'run'")
    parser.add_argument("--config", type=Path, help="experiment config JSON")
    parser.add_argument("--model", help="model identifier (w2w2, w2w4)")
    parser.add_argument("--coord", type=int, action="append", help="coordinate label, 1-based (repeatable)")
    parser.add_argument("--n", type=float, action="append", help="scale n (repeatable)")
    parser.add_argument("--sigma", type=float, action="append", help="step size (repeatable)")
    parser.add_argument("--seed", type=int, help="64-bit seed")
    parser.add_argument("--sweeps", type=int, help="sweeps per run")
    parser.add_argument("--target-u", type=float, help="target acceptance rate for tune")
    parser.add_argument("--kind", choices=[k.value for k in FigureKind], help="figure data set")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, object]:
    """Config fields set on the command line."""
    mode = args.run_mode if args.mode == "run" else args.mode
    return {
        "mode": mode,
        "model": args.model,
        "coords": args.coord,
        "n_grid": args.n,
        "sigma_grid": args.sigma,
        "seed": args.seed,
        "sweeps": args.sweeps,
        "target_u": args.target_u,
        "figure": args.kind,
        "output_path": args.out,
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Console entry point."""
    args = build_parser().parse_args(argv)
    configure_logging(settings.sampler_settings.log_level, settings.sampler_settings.log_json)
    try:
        config = load_config(args.config, overrides_from_args(args))
    except ConfigError as exc:
        logger.error(str(exc))
        return exit_code_for(exc)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
