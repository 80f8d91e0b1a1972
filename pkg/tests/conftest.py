import copy
import json

import numpy as np
import pytest

from pvvolt.cli import bundled_config_path, run_pipeline
from pvvolt.config import load_config


def small_config_dict(**overrides) -> dict:
    """Bundled config shrunk to a few days and the minimum Monte-Carlo size."""
    cfg = json.loads(bundled_config_path().read_text())
    cfg["process"]["days"] = 24
    cfg["model"]["sample_count"] = 10**4
    for key, value in overrides.items():
        section, _, field = key.partition("__")
        if field:
            cfg[section][field] = value
        else:
            cfg[section] = value
    return copy.deepcopy(cfg)


@pytest.fixture
def write_config(tmp_path):
    def _write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return _write


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """Full pipeline on the shrunk config; returns (config, output dir)."""
    root = tmp_path_factory.mktemp("pipeline")
    path = root / "config.json"
    path.write_text(json.dumps(small_config_dict()))
    cfg = load_config(path, output_dir=str(root / "out"))
    lines = []
    run_pipeline(cfg, emit=lines.append)
    return cfg, root / "out", lines


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting -----------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion.

    A test that errors before recording is reported as failed.
    """
    number = request.node.get_closest_marker("criterion").args[0]

    def record(ok: bool, detail: str):
        ACCEPTANCE[number] = (bool(ok), detail)

    yield record
    ACCEPTANCE.setdefault(number, (False, "errored before reporting"))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
