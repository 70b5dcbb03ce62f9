"""Tool-using agents: context pre-collection and safety-property analysis."""
