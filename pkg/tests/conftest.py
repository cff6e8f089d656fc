import sys

import numpy as np
import pytest

from uavepg.scenario import GroundUser, Obstacle, UavState, Vec3, WorldState


def make_world(uav_xyz, user_xy, obstacles=(), power=2.0, slot_length=10.0, area=(2000.0, 2000.0),
               band=(100.0, 300.0), comm_radius=4000.0):
    uavs = tuple(UavState(i, Vec3(*map(float, p)), tx_power=power) for i, p in enumerate(uav_xyz))
    users = tuple(GroundUser(m, Vec3(float(x), float(y), 0.0)) for m, (x, y) in enumerate(user_xy))
    return WorldState(0, uavs, users, tuple(obstacles), area, band, slot_length, (0.5, 2.0), comm_radius)


@pytest.fixture
def small_world():
    # four UAVs on a square, eight users, one building between UAVs 0 and 2
    uavs = [(400, 400, 150), (1600, 400, 150), (1600, 1600, 150), (400, 1600, 150)]
    users = [(350, 450), (450, 350), (1650, 450), (1550, 350), (1650, 1550), (1550, 1650), (350, 1550), (450, 1650)]
    obs = [Obstacle(1000, 1000, 200, 200, 250)]
    return make_world(uavs, users, obs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
