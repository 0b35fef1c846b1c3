"""Zonal day-ahead electricity market simulator and analysis toolkit.

Subpackages cover the full pipeline: a strictly convex QP kernel (`qp`),
hourly market clearing with flow-based network constraints (`clearing`),
closed-form results for the single-zone unconstrained market (`simplified`),
worst-case-price strategy segments (`rss`), grid-search Nash equilibrium
computation (`nash`), fuel-price driven cost construction (`costs`),
cost-scale calibration against observed prices (`calibration`), and
truthful-vs-strategic bidding state detection (`detection`).
"""

__version__ = "0.1.0"
