import numpy as np
import pytest

from lanempc import camera as cm
from lanempc.sim import default_camera
from lanempc.vision import VisionConfig, VisionPipeline


@pytest.fixture(scope="session")
def cam():
    return default_camera()


@pytest.fixture(scope="session")
def vision_cfg():
    return VisionConfig()


@pytest.fixture(scope="session")
def pipeline(cam, vision_cfg):
    return VisionPipeline(cam, vision_cfg)


@pytest.fixture(scope="session")
def renderer(cam, vision_cfg):
    return cm.RoadRenderer(cam, vision_cfg.width, vision_cfg.height)


@pytest.fixture(scope="session")
def straight_frame(renderer):
    return renderer.render(cm.straight_road(), (0.0, 0.0, 0.0))


@pytest.fixture(scope="session")
def offset_frame(renderer):
    # vehicle 0.1 m to the right of the lane center (world y is left-positive)
    return renderer.render(cm.straight_road(), (0.0, -0.1, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and fail the test on FAIL."""
    def record(number, title, passed, detail, seconds, limit):
        ok = passed and seconds < limit
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {number:>2}. {title}: {detail}; "
                                f"runtime {seconds:.2f} s (limit {limit:g} s)")
        print(ACCEPTANCE_LINES[-1])
        assert ok, ACCEPTANCE_LINES[-1]
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)
