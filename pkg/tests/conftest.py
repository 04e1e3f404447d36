import numpy as np
import pytest

from cpm_audit.data import PredictionRecord


def make_record(p0: float, label: int, split: str) -> PredictionRecord:
    """Two-class record from the first-class probability."""
    return PredictionRecord(np.array([p0, 1.0 - p0]), label, split)


@pytest.fixture
def tiny_audit_records():
    """Seeded generator of small two-class audit instances."""

    def build(instance_seed: int, max_members: int = 10, max_nonmembers: int = 10):
        rng = np.random.default_rng(1000 + instance_seed)
        n_m = int(rng.integers(3, max_members + 1))
        n_n = int(rng.integers(4, max_nonmembers + 1))
        records = []
        for _ in range(n_m):
            records.append(
                make_record(float(rng.uniform(0.02, 0.98)), int(rng.integers(0, 2)), "member")
            )
        for _ in range(n_n):
            records.append(
                make_record(
                    float(rng.uniform(0.02, 0.98)), int(rng.integers(0, 2)), "nonmember"
                )
            )
        return records

    return build
