"""Governance-aware SOC engine.

Normalizes heterogeneous security telemetry into unified incident records,
correlates and triages them, reconstructs multi-stage attack scenarios
over a weighted correlation graph, post-processes and validates detection
rules, and exposes everything as policy-governed, audited tools with a
human-in-the-loop pipeline.
"""

__version__ = "0.1.0"
