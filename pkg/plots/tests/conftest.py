import sys
from pathlib import Path

# the renderer is a standalone script next to this test tree
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
