import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lyasco.lure import estimate_sector, solve_lmi
from lyasco.pendulum import pendulum_lure
from lyasco.power import bundled_grid, line_trip_scenario, solve_opf, solve_tscopf
from lyasco.vmin import v_min


@pytest.fixture(scope="session")
def pendulum_pack():
    sys_l, poly = pendulum_lure()
    sector = estimate_sector(sys_l, poly)
    lmi = solve_lmi(sys_l, sector)
    cert = lmi.quadratic(sys_l.equilibrium)
    vres = v_min(cert, poly)
    return dict(system=sys_l, polytope=poly, sector=sector, lmi=lmi,
                certificate=cert, vmin=vres)


@pytest.fixture(scope="session")
def threebus_grid():
    return bundled_grid("threebus")


@pytest.fixture(scope="session")
def threebus_scenario(threebus_grid):
    return line_trip_scenario(threebus_grid, (0, 1), 0.0, 0.1)


@pytest.fixture(scope="session")
def threebus_opf(threebus_grid):
    return solve_opf(threebus_grid)


@pytest.fixture(scope="session")
def threebus_tscopf(threebus_grid, threebus_scenario):
    return solve_tscopf(threebus_grid, threebus_scenario)
