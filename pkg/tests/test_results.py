import json

import pytest
from helpers import read_csv

from singular.mcmc import __version__
from singular.mcmc.errors import ArgumentError
from singular.mcmc.results import (
    RESULTS_HEADER,
    CsvWriter,
    ResultRow,
    ResultWriter,
    RunManifest,
    blob_sha1,
    format_float,
    read_results,
    write_json,
)


def test_format_float():
    assert format_float(None) == ""
    assert format_float(0.1) == "0.1"
    assert format_float(1e10) == "10000000000.0"
    assert float(format_float(2.0 / 3.0)) == 2.0 / 3.0


invalid_rows = {
    "unknown_source": dict(source="guess", stderr=None),
    "mcmc_above_one": dict(source="mcmc", U=1.5, stderr=0.1),
    "mcmc_without_stderr": dict(source="mcmc", stderr=None),
    "oracle_with_stderr": dict(source="oracle", stderr=0.1),
    "oracle_negative": dict(source="oracle", U=-0.1, stderr=None),
}


@pytest.mark.parametrize("fields", invalid_rows.values(), ids=invalid_rows.keys())
def test_result_row_validation(fields):
    base = dict(model="w2w2", coord=1, n=1e4, sigma=10.0, U=0.5, stderr=0.01, source="mcmc")
    base.update(fields)
    with pytest.raises(ArgumentError):
        ResultRow(**base)


def test_theory_rows_are_unbounded():
    row = ResultRow("w2w2", 1, 1e4, 0.01, 12.5, None, "theory:Theorem1Main")
    assert row.to_csv()[4] == "12.5"


def test_results_csv(tmp_path):
    rows = [
        ResultRow("w2w4", 2, 1e4, 100.0, 0.0123, 4e-4, "mcmc", seed=7, sweeps=1000),
        ResultRow("w2w4", 2, 1e4, 100.0, 0.0125, None, "oracle"),
        ResultRow("w2w4", 1, 1e8, 10.0, 0.27039, None, "theory:AppendixB_U1"),
    ]
    path = tmp_path / "results.csv"
    with ResultWriter(path) as writer:
        for row in rows:
            writer.append_row(row)

    assert read_results(path) == rows
    raw = read_csv(path)
    assert tuple(raw[0].keys()) == RESULTS_HEADER
    assert raw[1]["stderr"] == ""
    assert raw[1]["seed"] == ""
    assert raw[0]["seed"] == "7"


def test_read_results_checks_header(tmp_path):
    path = tmp_path / "other.csv"
    with CsvWriter(path, ("x", "y")) as writer:
        writer.append([1.0, 2.0])
    with pytest.raises(ArgumentError):
        read_results(path)


def test_csv_writer_field_count(tmp_path):
    with CsvWriter(tmp_path / "x.csv", ("a", "b")) as writer:
        with pytest.raises(ArgumentError):
            writer.append([1.0])


def test_write_json_is_deterministic(tmp_path):
    path = tmp_path / "out.json"
    write_json(path, {"b": 1, "a": [1.5, 2]})
    assert path.read_text() == '{\n  "a": [\n    1.5,\n    2\n  ],\n  "b": 1\n}\n'


def test_blob_sha1(tmp_path):
    empty = tmp_path / "empty"
    empty.write_bytes(b"")
    assert blob_sha1(empty) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"

    hello = tmp_path / "hello"
    hello.write_bytes(b"hello\n")
    assert blob_sha1(hello) == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_manifest(tmp_path):
    manifest = RunManifest(tmp_path, {"mode": "sample"})
    done = manifest.track("results.csv")
    done.write_text("x\n")
    manifest.complete("results.csv")
    manifest.track("swaps.json")
    manifest.write()

    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["status"] == "running"
    assert data["tool"] == {"name": "singular-mcmc", "version": __version__}
    assert data["config"] == {"mode": "sample"}
    outputs = {entry["path"]: entry for entry in data["outputs"]}
    assert outputs["results.csv"]["partial"] is False
    assert outputs["results.csv"]["sha1"] == blob_sha1(done)
    assert outputs["results.csv"]["bytes"] == 2
    assert outputs["swaps.json"]["partial"] is True
    assert "sha1" not in outputs["swaps.json"]


def test_manifest_failure(tmp_path):
    manifest = RunManifest(tmp_path, {})
    for name in ("a.csv", "b.csv"):
        manifest.track(name)
    manifest.complete("a.csv")
    manifest.fail(ArgumentError("boom"))
    data = manifest.to_dict()
    assert data["status"] == "failed"
    assert data["error"] == "ArgumentError: boom"
    assert [entry["partial"] for entry in data["outputs"]] == [False, True]
