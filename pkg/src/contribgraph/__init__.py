"""Contribution-graph toolkit.

Builds a graph of fine-grained scientific contributions and their
prerequisite edges from paper full text via a pluggable text-generation
backend, generates the prerequisite-prediction ranking task from the
graph, and scores submissions with temporally-filtered backtesting.
"""

__version__ = "0.1.0"
