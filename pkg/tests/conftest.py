"""Shared fixtures: bundled tabulations, demographics, synthetic helpers."""

import pytest

from paretotab import potential_units
from paretotab.data import (
    load_agi_2019,
    load_capital_2019,
    load_demographics,
    load_wages_2019,
)
from paretotab.tabulation import IncomeGroup, Tabulation


@pytest.fixture(scope="session")
def agi2019():
    return load_agi_2019()


@pytest.fixture(scope="session")
def wages2019():
    return load_wages_2019()


@pytest.fixture(scope="session")
def capital2019():
    return load_capital_2019()


@pytest.fixture(scope="session")
def demographics():
    return load_demographics()


@pytest.fixture(scope="session")
def population2019(demographics):
    return potential_units(demographics, 2019)


def make_tabulation(rows, year=2019, concept="other", population_n=None):
    """Tabulation from (threshold, count, total) triples; totals inferred."""
    groups = tuple(IncomeGroup(t, c, s) for t, c, s in rows)
    return Tabulation(
        year=year,
        concept=concept,
        groups=groups,
        grand_total_count=sum(g.count for g in groups),
        grand_total_income=sum(g.total for g in groups),
        population_n=population_n,
    )
