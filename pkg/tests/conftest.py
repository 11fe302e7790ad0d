import numpy as np
import pytest
import torch

from gazelift import geometry as geo
from gazelift import scenes


ACCEPTANCE = {}     # criterion number -> (passed, detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: long-running acceptance criteria")
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
    ACCEPTANCE[marker.args[0]] = (rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_records():
    return scenes.generate_dataset(64, seed=3)


def random_unit(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def skeleton_with_gaze(rng, direction, dist=geo.DEFAULT_GAZE_DISTANCE):
    pose = rng.standard_normal((geo.NUM_JOINTS, 3)) * 0.3
    pose[geo.GAZE] = geo.gaze_joint_from_direction(pose[geo.LEYE], pose[geo.REYE], direction, dist)
    return pose
