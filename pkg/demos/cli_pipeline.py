"""Drive the command-line pipeline end to end in a temporary directory.

Every subcommand writes CSV/JSON with a config echo, so downstream tooling
(including the plotting package) can consume runs without importing this
library.  This script samples a cloud, estimates a density slice, fits the
model to the sampled endpoints, and prints where everything landed.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path


def run(*args):
    cmd = [sys.executable, "-m", "geomppca.cli", *args]
    print("$", " ".join(cmd[2:]))
    subprocess.run(cmd, check=True)


with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)

    run("sample", "--manifold", "sphere", "--lambda", "0.6",
        "--sigma", "0.12", "--N", "48", "--n", "40", "--seed", "3",
        "--out", str(root / "cloud"))

    run("density", "--manifold", "sphere", "--lambda", "0.6",
        "--sigma", "0.12", "--grid=-0.6:0.6:5", "--n-bridges", "400",
        "--n", "40", "--seed", "5", "--out", str(root / "dens"))

    run("fit", "--manifold", "sphere", "--k", "1",
        "--data", str(root / "cloud" / "endpoints.csv"),
        "--n-bridges", "300", "--n", "25", "--max-iter", "4", "--seed", "9",
        "--out", str(root / "fit"))

    print("\nartifacts:")
    for f in sorted(root.rglob("*")):
        if f.is_file():
            print(" ", f.relative_to(root))

    fitted = json.loads((root / "fit" / "fit.json").read_text())
    print("\nfitted scales:", fitted["lambdas"], " sigma:", round(fitted["sigma"], 4))
