from __future__ import annotations

from importlib import resources

import pytest

from immerse import load_world, parse_scenario, parse_scene

DATA = resources.files("immerse") / "data"

# acceptance results, printed in the terminal summary
ACCEPTANCE: list[str] = []


def demo_paths():
    return DATA / "demo.scene", DATA / "demo.scn", DATA / "demo.assert"


def demo_docs():
    scene, scn, _ = demo_paths()
    return parse_scene(scene.read_bytes()), parse_scenario(scn.read_bytes())


def run_demo(**world_kw):
    scene, scenario = demo_docs()
    world = load_world(scene, **world_kw)
    world.run_scenario(scenario)
    return world


@pytest.fixture(scope="session")
def demo_world():
    return run_demo()


def scene_world(text: str, **world_kw):
    return load_world(parse_scene(text), **world_kw)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
