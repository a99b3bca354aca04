import numpy as np
import pytest
import shapely
from shapely import affinity

from gradcycle.meshgen import complete_triangulation, polygon_system


def random_fat_mesh(rng, min_faces=200):
    """Chew mesh of a random rotated rectangle or regular polygon."""
    while True:
        if rng.random() < 0.5:
            w, hgt = rng.uniform(1, 2, 2)
            poly = shapely.box(0, 0, w, hgt)
        else:
            k = int(rng.integers(4, 9))
            t = 2 * np.pi * np.arange(k) / k
            poly = shapely.Polygon(np.column_stack([np.cos(t), np.sin(t)]))
        poly = affinity.rotate(poly, rng.uniform(0, 360), origin=(0, 0))
        poly = affinity.translate(poly, *rng.uniform(-1, 1, 2))
        h = rng.uniform(0.06, 0.1)
        tri, report = complete_triangulation(polygon_system(poly, h))
        assert report.passed
        if len(tri.faces) >= min_faces:
            return tri



# One PASS/FAIL line per acceptance criterion, printed after the run.
# Tests opt in with ``@pytest.mark.criterion("C1")`` and may attach a
# summary through the ``criterion_detail`` fixture.
CRITERIA = {}
DETAILS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(key): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    report = outcome.get_result()
    key = marker.args[0]
    if report.when == "call" or report.failed:
        CRITERIA[key] = CRITERIA.get(key, True) and report.passed


@pytest.fixture
def criterion_detail(request):
    key = request.node.get_closest_marker("criterion").args[0]

    def record(text):
        DETAILS[key] = text

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA, key=lambda k: int(k[1:])):
        verdict = "PASS" if CRITERIA[key] else "FAIL"
        terminalreporter.write_line(f"{key} {verdict}  {DETAILS.get(key, '')}".rstrip())
