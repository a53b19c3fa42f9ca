import json
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
PRESETS = ROOT / "presets"


def load_preset(name: str) -> dict:
    return json.loads((PRESETS / f"{name}.json").read_text(encoding="utf-8"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def scenario1_raw():
    return load_preset("scenario1")


@pytest.fixture
def scenario2_raw():
    return load_preset("scenario2")
