"""Membership-inference auditing from per-example softmax outputs.

The package measures how much a classifier leaks about its training set:
classical score-threshold attacks, a convex-polytope leakage metric fitted
by surrogate-loss optimization, exact brute-force discrepancy oracles for
tiny point sets, and a synthetic model lab that produces audit targets.
"""

__version__ = "0.1.0"

FORMAT_VERSIONS = {
    "prediction-csv": 1,
    "mixed-prediction-csv": 1,
    "raw-dataset-csv": 1,
    "model-json": 1,
    "polytope-json": 1,
    "report-json": 1,
}
