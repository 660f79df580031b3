from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def fig5_cfg():
    return CONFIGS / "fig5.cfg"
