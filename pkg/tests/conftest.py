from pathlib import Path

import pytest

from endonav.cli import load_run_config
from endonav.env import build_scene, make_variant

ROOT = Path(__file__).resolve().parent.parent
DESK_YAML = ROOT / "configs" / "desk.yaml"


@pytest.fixture(scope="session")
def desk_run_config():
    return load_run_config(DESK_YAML)


@pytest.fixture(scope="session")
def desk_config(desk_run_config):
    return desk_run_config.scene


@pytest.fixture
def make_scene(desk_config):
    """Fresh desk scene for a variant, with optional field overrides."""
    from dataclasses import replace

    def build(variant="DE", **changes):
        return build_scene(replace(make_variant(desk_config, variant), **changes))
    return build


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
