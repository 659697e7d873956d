import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from icubench.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def small_dump(tmp_path_factory):
    """A small synthetic dump shared by pipeline-level tests."""
    out = tmp_path_factory.mktemp("dump") / "data"
    cfg = SynthConfig(
        n_patients=150,
        hours_range=(20, 60),
        missingness=0.15,
        seed=11,
        signal_strength=1.0,
        underage_fraction=0.06,
        sparse_fraction=0.06,
    )
    generate(cfg, out)
    return out
