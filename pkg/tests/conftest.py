"""Shared fixtures. Expensive rigs are built once per session.

The acceptance module's criteria results are collected here and echoed as one
PASS/FAIL line per criterion in the terminal summary.
"""

import numpy as np
import pytest

_ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1].replace("test_", "", 1)
        _ACCEPTANCE_RESULTS.append((name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}")

from fishbone import shapes
from fishbone.mesh_io import RawMesh, clean_and_normalize
from fishbone.pipeline import ExtractConfig, extract_rig


@pytest.fixture(scope="session")
def icosphere_raw():
    v, f = shapes.icosphere(3)
    return RawMesh(v, f)


@pytest.fixture(scope="session")
def icosphere_part(icosphere_raw):
    return clean_and_normalize(icosphere_raw).parts[0]


@pytest.fixture(scope="session")
def grid_part():
    v, f = shapes.grid_sheet(32, 32)
    return clean_and_normalize(RawMesh(v, f)).parts[0]


@pytest.fixture(scope="session")
def ytube_raw():
    v, f = shapes.y_tube()
    return RawMesh(v, f)


@pytest.fixture(scope="session")
def ytube_rig(ytube_raw):
    rig, _ = extract_rig(
        RawMesh(ytube_raw.vertices.copy(), ytube_raw.faces.copy()),
        ExtractConfig(use_cache=False, keep_largest_component=True),
    )
    return rig


@pytest.fixture(scope="session")
def sphere_rig(icosphere_raw):
    rig, _ = extract_rig(
        RawMesh(icosphere_raw.vertices.copy(), icosphere_raw.faces.copy()),
        ExtractConfig(use_cache=False),
    )
    return rig


@pytest.fixture(scope="session")
def cylinder_rig():
    v, f = shapes.capped_cylinder(radius=0.3, height=2.0, rings=30, segments=28)
    rig, _ = extract_rig(RawMesh(v, f), ExtractConfig(use_cache=False))
    return rig


@pytest.fixture()
def fresh_sphere_rig(sphere_rig):
    sphere_rig.reset()
    yield sphere_rig
    sphere_rig.reset()


@pytest.fixture()
def fresh_cylinder_rig(cylinder_rig):
    cylinder_rig.reset()
    yield cylinder_rig
    cylinder_rig.reset()


@pytest.fixture()
def fresh_ytube_rig(ytube_rig):
    ytube_rig.reset()
    yield ytube_rig
    ytube_rig.reset()


def pole_index(part):
    return int(np.argmax(part.vertices[:, 1]))
