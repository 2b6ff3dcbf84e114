"""Trace-link recovery toolkit.

Recovers candidate trace links between software-artifact layers, scores them
with a TF-IDF vector space model (or an external scorer over a wire
protocol), evaluates rankings with seeded splits (MAP, max-F2), analyzes
dataset health and orphan artifacts, and runs a human review loop that turns
vetted predictions into training data.
"""

__version__ = "0.1.0"
