import io
import json
import logging

import pytest
from pydantic import ValidationError

from singular.mcmc.errors import (
    ArgumentError,
    CaseMismatchError,
    ConfigError,
    FitError,
    NumericalError,
    QuadratureConvergenceError,
    SingularMCMCError,
    TheoryDomainError,
    TuningError,
    exit_code_for,
)
from singular.mcmc.logger import ExtraFormatter, JsonFormatter, configure_logging
from singular.mcmc.settings import SamplerSettings


def test_settings_from_environment(fresh_package):
    settings_module, _ = fresh_package(threads=3, log_level=" debug ", log_json="true")
    assert settings_module.sampler_settings.threads == 3
    assert settings_module.sampler_settings.log_level == "DEBUG"
    assert settings_module.sampler_settings.log_json


@pytest.mark.parametrize("field,value", [("threads", 0), ("n_batches", 10), ("random_block", 0)])
def test_settings_validation(field, value):
    with pytest.raises(ValidationError):
        SamplerSettings(**{field: value})


exit_codes = {
    "config": (ConfigError("bad"), 2),
    "argument": (ArgumentError("bad"), 2),
    "case": (CaseMismatchError("bad"), 3),
    "numerical": (NumericalError("bad"), 4),
    "quadrature": (QuadratureConvergenceError("bad"), 5),
    "domain": (TheoryDomainError("bad"), 6),
    "fit": (FitError("bad"), 7),
    "tuning": (TuningError("bad"), 8),
    "base": (SingularMCMCError("bad"), 1),
    "other": (KeyError("bad"), 1),
}


@pytest.mark.parametrize("case", exit_codes.values(), ids=exit_codes.keys())
def test_exit_codes(case):
    exc, code = case
    assert exit_code_for(exc) == code


def test_exit_code_overrides():
    assert exit_code_for(FitError("x"), {SingularMCMCError: 9}) == 9


def test_error_messages():
    assert str(ConfigError("bad field", line=4, path="run.json")) == "run.json:4: bad field"
    assert str(ConfigError("bad field")) == "<config>: bad field"
    err = NumericalError("non-finite", w=[1, 2], w_prime=[1, 3])
    assert err.w == [1.0, 2.0]
    assert "w'=[1.0, 3.0]" in str(err)


def _record(**extra):
    record = logging.LogRecord("singular.mcmc.test", logging.INFO, __file__, 1, "hello %s", ("world",), None)
    record.__dict__.update(extra)
    return record


def test_json_formatter():
    line = JsonFormatter().format(_record(n=1e4, coord=2))
    data = json.loads(line)
    assert data["message"] == "hello world"
    assert data["level"] == "INFO"
    assert data["logger"] == "singular.mcmc.test"
    assert data["n"] == 1e4
    assert data["coord"] == 2
    assert data["timestamp"].endswith("Z")
    assert "args" not in data


def test_extra_formatter():
    line = ExtraFormatter("%(levelname)s %(message)s").format(_record(sigma=10.0))
    assert line == "INFO hello world [sigma=10.0]"
    assert ExtraFormatter("%(message)s").format(_record()) == "hello world"


def test_configure_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    package_level = logging.getLogger("singular.mcmc").level
    stream = io.StringIO()
    try:
        logger = configure_logging("DEBUG", json_lines=True, stream=stream)
        assert logger.name == "singular.mcmc"
        assert logger.level == logging.DEBUG
        assert len(root.handlers) == 1
        logging.getLogger("singular.mcmc.sampler").debug("step", extra={"accepted": True})
        data = json.loads(stream.getvalue())
        assert data["accepted"] is True
        assert data["logger"] == "singular.mcmc.sampler"
    finally:
        for handler in root.handlers[:]:
            root.removeHandler(handler)
        for handler in handlers:
            root.addHandler(handler)
        root.setLevel(level)
        logging.getLogger("singular.mcmc").setLevel(package_level)
