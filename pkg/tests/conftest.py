import sys
from fractions import Fraction

import pytest

from clav.model import GeoTriplet, ingest_triplets

def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)


# users u1,u2,u3 -> 0,1,2 and regions r1,r2,r3 -> 0,1,2
INTRO = [(0, 0, 20), (1, 0, 15), (0, 1, 15), (2, 1, 30), (1, 2, 20)]


@pytest.fixture
def intro():
    return ingest_triplets(INTRO)


@pytest.fixture
def intro_line():
    # the same visits laid out on a line, region j at x = j
    return [GeoTriplet(u, (float(j),), Fraction(t)) for u, j, t in INTRO]


def brute_count(records, regions, k):
    """Dict-based scan over raw (user, region, time) records."""
    totals = {}
    for u, j, t in records:
        if j in regions:
            totals[u] = totals.get(u, 0) + Fraction(t)
    return sum(1 for v in totals.values() if v >= k)


def brute_geo(triplets, lo, hi, k):
    totals = {}
    for trip in triplets:
        if all(a <= x <= b for a, x, b in zip(lo, trip.point, hi)):
            totals[trip.user] = totals.get(trip.user, 0) + Fraction(trip.time)
    return sum(1 for v in totals.values() if v >= k)
