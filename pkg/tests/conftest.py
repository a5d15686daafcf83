import os

import matplotlib
import pytest
from hypothesis import settings

matplotlib.use("Agg")

settings.register_profile("ci", max_examples=60, deadline=None)
settings.register_profile("thorough", max_examples=1000, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(autouse=True)
def _fixed_epoch(monkeypatch):
    # Baselines carry a timestamp; pin it so reruns compare byte-for-byte.
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
