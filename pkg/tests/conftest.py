import sys
from pathlib import Path

from hypothesis import settings

# make the oracle helpers importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=100, derandomize=True)
settings.load_profile("default")
