"""Hybrid rare-disease phenotyping toolkit.

Compiles a rare-disease vocabulary from ontology tables, extracts candidate
mentions from clinical notes by dictionary matching, filters each mention
with an LLM (or a deterministic rule-based stand-in), and evaluates the
pipeline at mention level and patient level.
"""

__version__ = "0.1.0"
