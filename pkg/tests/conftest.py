import json
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mbct.monero import KeyQuad  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def wallets():
    r = random.Random(99)
    return {name: KeyQuad.generate(r) for name in ("alice", "bob", "carol")}


@pytest.fixture(scope="session")
def vectors():
    return json.loads((DATA / "vectors.json").read_text())
