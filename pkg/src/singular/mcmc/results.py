"""Result rows, CSV/JSON writers and the run manifest."""

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import attrs

from singular.mcmc import __version__
from singular.mcmc.errors import ArgumentError

logger = logging.getLogger(__name__)

RESULTS_SCHEMA_VERSION = 1
RESULTS_HEADER = ("model", "coord", "n", "sigma", "U", "stderr", "source", "seed", "sweeps")
BOUNDED_SOURCES = ("mcmc", "oracle")


def format_float(value: Optional[float]) -> str:
    """Shortest round-trip decimal; empty for None."""
    if value is None:
        return ""
    return repr(float(value))


def _opt(value: str, kind):
    return kind(value) if value != "" else None


@attrs.frozen
class ResultRow:
    """One (model, coord, n, σ) acceptance rate. ``coord`` is the 1-based label."""

    model: str
    coord: int
    n: float
    sigma: float
    U: float
    stderr: Optional[float]
    source: str
    seed: Optional[int] = None
    sweeps: Optional[int] = None

    def __attrs_post_init__(self):
        if not (self.source in BOUNDED_SOURCES or self.source.startswith("theory:")):
            raise ArgumentError(f"unknown result source {self.source!r}")
        if self.source in BOUNDED_SOURCES and not 0 <= self.U <= 1:
            raise ArgumentError(f"{self.source} acceptance rate {self.U} outside [0, 1]")
        if (self.stderr is not None) != (self.source == "mcmc"):
            raise ArgumentError("stderr is present exactly for mcmc rows")

    def to_csv(self) -> List[str]:
        """CSV fields in header order."""
        return [
            self.model,
            str(self.coord),
            format_float(self.n),
            format_float(self.sigma),
            format_float(self.U),
            format_float(self.stderr),
            self.source,
            "" if self.seed is None else str(self.seed),
            "" if self.sweeps is None else str(self.sweeps),
        ]

    @classmethod
    def from_csv(cls, fields: Dict[str, str]) -> "ResultRow":
        """Parse a csv.DictReader row."""
        return cls(
            model=fields["model"],
            coord=int(fields["coord"]),
            n=float(fields["n"]),
            sigma=float(fields["sigma"]),
            U=float(fields["U"]),
            stderr=_opt(fields["stderr"], float),
            source=fields["source"],
            seed=_opt(fields["seed"], int),
            sweeps=_opt(fields["sweeps"], int),
        )


class CsvWriter:
    """Append-only CSV writer with a fixed header; flushes every row."""

    def __init__(self, path: Path, header: Sequence[str]):
        """Create (truncate) ``path`` and write the header."""
        self.path = Path(path)
        self.header = tuple(header)
        self._handle = self.path.open("w", newline="")
        self._writer = csv.writer(self._handle, lineterminator="\n")
        self._writer.writerow(self.header)
        self._handle.flush()

    def append(self, fields: Sequence[Any]) -> None:
        """Write one row."""
        if len(fields) != len(self.header):
            raise ArgumentError(f"row has {len(fields)} fields, header has {len(self.header)}")
        self._writer.writerow([f if isinstance(f, str) else format_float(f) for f in fields])
        self._handle.flush()

    def close(self) -> None:
        """Close the file."""
        self._handle.close()

    def __enter__(self):
        """Context manager."""
        return self

    def __exit__(self, *exc):
        """Close on exit."""
        self.close()


class ResultWriter(CsvWriter):
    """results.csv writer."""

    def __init__(self, path: Path):
        """Open with the result header."""
        super().__init__(path, RESULTS_HEADER)

    def append_row(self, row: ResultRow) -> None:
        """Write one ResultRow."""
        self.append(row.to_csv())


def read_results(path: Path) -> List[ResultRow]:
    """Load a results CSV; the header must match the current schema."""
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
            raise ArgumentError(f"{path}: unexpected header {reader.fieldnames}")
        return [ResultRow.from_csv(fields) for fields in reader]


def write_json(path: Path, obj: Any) -> None:
    """Deterministic JSON (sorted keys, two-space indent, trailing newline)."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def blob_sha1(path: Path) -> str:
    """Git blob hash of a file's content."""
    data = Path(path).read_bytes()
    digest = hashlib.sha1(f"blob {len(data)}\0".encode())
    digest.update(data)
    return digest.hexdigest()


class RunManifest:
    """manifest.json of one run: config echo, status and hashed outputs."""

    def __init__(self, out_dir: Path, config_echo: Dict[str, Any]):
        """Start a manifest for ``out_dir``."""
        self.out_dir = Path(out_dir)
        self.config_echo = config_echo
        self.status = "running"
        self.error: Optional[str] = None
        self._outputs: Dict[str, bool] = {}

    def track(self, name: str) -> Path:
        """Register an output file (partial until ``complete``)."""
        self._outputs.setdefault(name, False)
        return self.out_dir / name

    def complete(self, name: str) -> None:
        """Mark an output as fully written."""
        self._outputs[name] = True

    def fail(self, exc: BaseException) -> None:
        """Record a failure."""
        self.status = "failed"
        self.error = f"{type(exc).__name__}: {exc}"

    def to_dict(self) -> Dict[str, Any]:
        """Manifest content."""
        outputs = []
        for name in sorted(self._outputs):
            path = self.out_dir / name
            entry: Dict[str, Any] = {"path": name, "partial": not self._outputs[name]}
            if path.exists():
                entry["sha1"] = blob_sha1(path)
                entry["bytes"] = path.stat().st_size
            outputs.append(entry)
        return {
            "schema_version": RESULTS_SCHEMA_VERSION,
            "tool": {"name": "singular-mcmc", "version": __version__},
            "config": self.config_echo,
            "status": self.status,
            "error": self.error,
            "outputs": outputs,
        }

    def write(self) -> Path:
        """Write manifest.json."""
        path = self.out_dir / "manifest.json"
        write_json(path, self.to_dict())
        logger.info("Wrote manifest", extra={"path": str(path), "status": self.status})
        return path
