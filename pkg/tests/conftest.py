import numpy as np
import pytest

from uavrelay.channel import ChannelParams
from uavrelay.world import TerrainGrid, default_bounds, generate_terrain, place_scenario


def flat_terrain(n=9, cell_size=10.0, height=0.0, forest=False):
    return TerrainGrid(np.full((n, n), float(height)), np.full((n, n), forest), cell_size)


@pytest.fixture
def params():
    return ChannelParams()


@pytest.fixture(scope="session")
def small_scenario():
    terrain = generate_terrain(11, 17, 17, 50.0, 40.0, 0.3)
    return place_scenario(11, terrain, 5, default_bounds(terrain))


@pytest.fixture(scope="session")
def desk_scenario():
    terrain = generate_terrain(1, 65, 65, 100.0, 80.0, 0.3)
    return place_scenario(1, terrain, 15, default_bounds(terrain))


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(capsys):
    """Print and record one ``PASS``/``FAIL`` line per acceptance criterion, then assert."""

    def report(name, checks, detail=""):
        failed = [k for k, ok in checks.items() if not ok]
        line = f"{'FAIL' if failed else 'PASS'} {name}"
        if detail:
            line += f" | {detail}"
        if failed:
            line += f" | failed: {', '.join(failed)}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert not failed, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
