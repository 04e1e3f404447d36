"""Prediction exporter for membership-inference audits.

Produces the audit toolkit's prediction CSV (and the mixed-prediction CSV
for Mixup-score audits) from pretrained models. The exporter never computes
scores or advantages; the emitted files are the whole contract.
"""

__version__ = "0.1.0"
