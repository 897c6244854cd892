import math

import pytest

from semexplore.world import LidarSpec, Pose, Room, Wall, WorldSpec


def box_walls(x0, y0, x1, y1, t=0.2):
    """Four walls whose inner faces are the rectangle (x0, y0)-(x1, y1)."""
    h = t / 2
    return [
        Wall(x0 - t, y0 - h, x1 + t, y0 - h, t),
        Wall(x0 - t, y1 + h, x1 + t, y1 + h, t),
        Wall(x0 - h, y0, x0 - h, y1, t),
        Wall(x1 + h, y0, x1 + h, y1, t),
    ]


def square_room(size=10.0, range_max=20.0, spawn=None, beams=360):
    """Empty room with inner faces at 0 and ``size``; bounds include the walls."""
    t = 0.2
    return WorldSpec(
        "square",
        (-t, -t, size + t, size + t),
        box_walls(0.0, 0.0, size, size, t),
        [Room("room", ((0, 0), (size, 0), (size, size), (0, size)))],
        spawn or Pose(size / 2, size / 2, 0.0),
        LidarSpec(range_max, beams, 2 * math.pi),
    )


def two_rooms(range_max=6.0):
    """Two 5x5 m rooms side by side, joined by a 1 m door in the shared wall."""
    t = 0.2
    walls = box_walls(0.0, 0.0, 10.2, 5.0, t)
    walls += [Wall(5.1, 0.0, 5.1, 2.0, t), Wall(5.1, 3.0, 5.1, 5.0, t)]
    rooms = [Room("left", ((0, 0), (5.1, 0), (5.1, 5), (0, 5))),
             Room("right", ((5.1, 0), (10.2, 0), (10.2, 5), (5.1, 5)))]
    return WorldSpec("two-rooms", (-t, -t, 10.4, 5.2), walls, rooms, Pose(2.5, 2.5, 0.0),
                     LidarSpec(range_max, 360, 2 * math.pi))


@pytest.fixture
def square():
    return square_room()


ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(criterion: int, passed: bool, detail: str) -> bool:
    """Log one acceptance verdict; the lines are echoed in the terminal summary."""
    ACCEPTANCE.append((criterion, bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
