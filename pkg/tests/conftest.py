import sys
from pathlib import Path

import pytest

# Make sibling helper modules (refimpl) importable regardless of rootdir.
sys.path.insert(0, str(Path(__file__).parent))

GOLDEN_DIR = Path(__file__).parent.parent / "testdata" / "frames"


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN_DIR
