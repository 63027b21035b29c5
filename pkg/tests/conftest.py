from __future__ import annotations

import time
from pathlib import Path

import pytest

from reviewquarantine import pipeline, synthgen
from reviewquarantine.config import PipelineConfig

_ACCEPTANCE: dict[str, bool] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _ACCEPTANCE[name] = _ACCEPTANCE.get(name, True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in _ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")


@pytest.fixture(scope="session")
def default_scenario(tmp_path_factory):
    """Default synthetic scenario written to disk once per session."""
    sc = synthgen.generate(synthgen.ScenarioSpec())
    paths = sc.write(tmp_path_factory.mktemp("synth-default"))
    return sc, paths


def config_for(paths: dict, out_dir: Path, **overrides) -> PipelineConfig:
    return PipelineConfig(users=paths["users"], reviews=paths["reviews"], businesses=paths["businesses"],
                          out_dir=out_dir, **overrides).validate()


@pytest.fixture(scope="session")
def default_run(default_scenario, tmp_path_factory):
    """One full pipeline run over the default scenario: (scenario, config, manifest, seconds)."""
    sc, paths = default_scenario
    cfg = config_for(paths, tmp_path_factory.mktemp("run-default"))
    t0 = time.perf_counter()
    manifest = pipeline.run_pipeline(cfg)
    return sc, cfg, manifest, time.perf_counter() - t0
