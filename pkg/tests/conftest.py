import numpy as np
import pytest

from actdock.config import default_run_config
from actdock.dynamics import ChaserState, SimConfig
from actdock.policy import PolicyConfig

# one line per acceptance criterion, echoed after the test summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def run_cfg():
    return default_run_config()


@pytest.fixture
def sim():
    return SimConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_state(r=(0.0, -25.0, 0.0), v=(0.0, 0.0, 0.0),
               q=(1.0, 0.0, 0.0, 0.0), w=(0.0, 0.0, 0.0)):
    return ChaserState(
        r=np.asarray(r, dtype=np.float64),
        v=np.asarray(v, dtype=np.float64),
        q=np.asarray(q, dtype=np.float64),
        w=np.asarray(w, dtype=np.float64),
    )


def tiny_policy_config(**overrides):
    """Smallest config the shape constraints allow; fast to run and check."""
    kw = dict(
        k=2,
        d_model=32,
        n_heads=2,
        n_layers_enc=2,
        n_layers_dec=2,
        n_layers_vae=1,
        d_ff=32,
        d_z=4,
        image_height=8,
        image_width=8,
        backbone_channels=(4, 8, 16),
    )
    kw.update(overrides)
    return PolicyConfig(**kw)
