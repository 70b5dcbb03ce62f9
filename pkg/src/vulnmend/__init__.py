"""Vulnerability issue resolution for C/C++ repositories.

The package combines a deterministic localize/generate/validate/select
workflow with two tool-using LLM agents that enrich the issue report
before the workflow runs: one collects vulnerability-related context,
the other derives and tests safety properties against the live PoC.
"""

__version__ = "0.1.0"
