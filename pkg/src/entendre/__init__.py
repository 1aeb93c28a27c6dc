"""Entendre: platform-agnostic social bot detection toolkit.

Pipeline: ingest raw NDJSON dumps into a deterministic corpus store,
extract per-account behavioral features, flag likely automated accounts
with transparent heuristics, train and tune a from-scratch random forest
on labeled accounts, explore engagement networks with exposure coloring
and centrality, and serve scores over HTTP.
"""

__version__ = "0.1.0"

__all__ = [
    "records",
    "corpus",
    "features",
    "heuristic",
    "synth",
    "forest",
    "smbo",
    "graph",
    "service",
    "report",
    "cli",
]
