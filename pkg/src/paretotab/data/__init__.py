"""Bundled reference data.

``us2019_agi.csv`` / ``us2019_wages.csv``: the 2019 United States
individual income tax tabulation (IRS Statistics of Income, Publication
1304, "all returns" basic table): income groups bracketed by adjusted gross
income, with return counts and total income in thousands of dollars, for
AGI and for salaries and wages.  Wage-size brackets are not published, so
the wages file carries the AGI bracket bounds as its ordering thresholds.

``us_demographics.csv``: an approximate annual reconstruction, 1916-2019,
of the United States adult population (age 20 and over, Census intercensal
estimates), married couples (Census/CPS marital-status series), joint
returns (IRS, post-1950 only), and total returns (IRS), in persons or
returns.  Decennial anchors are rounded public figures interpolated
geometrically between census years; see the README for sources and
caveats.  Nothing is fetched over the network.
"""

from __future__ import annotations

from pathlib import Path

from paretotab.sampleframe import DemographicSeries, read_demographics
from paretotab.tabulation import Tabulation, derive_capital, parse_tabulation

_DATA_DIR = Path(__file__).parent


def bundled_path(name: str) -> Path:
    """Absolute path of a bundled data file."""
    path = _DATA_DIR / name
    if not path.exists():
        raise FileNotFoundError(f"no bundled file {name!r} in {_DATA_DIR}")
    return path


def load_agi_2019() -> Tabulation:
    return parse_tabulation(bundled_path("us2019_agi.csv"))


def load_wages_2019() -> Tabulation:
    return parse_tabulation(bundled_path("us2019_wages.csv"))


def load_capital_2019() -> Tabulation:
    """Capital income (AGI minus wages) derived from the two 2019 tables."""
    return derive_capital(load_agi_2019(), load_wages_2019())


def load_demographics() -> DemographicSeries:
    return read_demographics(bundled_path("us_demographics.csv"))
