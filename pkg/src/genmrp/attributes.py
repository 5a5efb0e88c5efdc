"""Six route attributes used for route sampling, baselines and Pareto counting.

Per link we keep additive quantities; a route's attribute vector is their sum
along the route, except familiarity, which is reported as the familiar share
of the route length.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

ATTRIBUTE_NAMES = ("time_s", "distance_m", "toll", "familiar_share", "traffic_lights", "rough_m")
# +1 minimise, -1 maximise
ATTRIBUTE_SENSE = (1, 1, 1, -1, 1, 1)
TIME, DIST, TOLL, FAMILIAR, LIGHTS, ROUGH = range(6)
COST_FLOOR = 1e-6


def link_table(fftime_s, length_m, toll, familiar, lights, rough_m) -> np.ndarray:
    """(N, 6) additive per-link table; column 3 holds the familiar length."""
    fam = np.asarray(familiar, dtype=float)
    length = np.asarray(length_m, dtype=float)
    return np.stack([
        np.asarray(fftime_s, dtype=float), length, np.asarray(toll, dtype=float),
        length * fam, np.asarray(lights, dtype=float), np.asarray(rough_m, dtype=float),
    ], axis=1)


def search_objectives(table: np.ndarray) -> np.ndarray:
    """(N, 6) non-negative minimisation objectives: familiar length becomes unfamiliar length."""
    obj = table.copy()
    obj[:, FAMILIAR] = table[:, DIST] - table[:, FAMILIAR]
    return np.maximum(obj, 0.0)


def route_attributes(table: np.ndarray, links: Sequence[int]) -> tuple[float, ...]:
    s = table[list(links)].sum(axis=0)
    share = s[FAMILIAR] / s[DIST] if s[DIST] > 0 else 0.0
    return (float(s[TIME]), float(s[DIST]), float(s[TOLL]), float(share),
            float(s[LIGHTS]), float(s[ROUGH]))


def single_objective_costs(table: np.ndarray, column: int) -> np.ndarray:
    """Per-link cost for optimising one attribute alone, floored for search."""
    return np.maximum(search_objectives(table)[:, column], COST_FLOOR)
