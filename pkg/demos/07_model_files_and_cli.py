"""
Model files and the command line
================================

Models and framework instances round-trip through a JSON schema, and the
`mdpkit` command drives everything from the shell: solve any framework,
compare two instances, regenerate the relation-map artifacts, convert
between penalty and constraint form, and generate random models.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from mdpkit import EntropyRegularizer, RegularizedInstance, random_mdp
from mdpkit.modelio import instance_from_dict, instance_to_dict, save_instance

workdir = Path(tempfile.mkdtemp(prefix="mdpkit-demo-"))

# Serialize a regularized instance; the block layout is plain JSON.
model = random_mdp(3, 2, seed=61, discount=0.9)
inst = RegularizedInstance(model, EntropyRegularizer(0.7))
path = workdir / "soft.json"
save_instance(inst, str(path))
print("framework block:", json.loads(path.read_text())["framework"])

# Loading gives back a solvable instance.
loaded = instance_from_dict(json.loads(path.read_text()))
print("round trip solves to:", loaded.solve().value)

# Same file through the CLI; report.json, value.csv, policy.csv land in out/.
out = workdir / "run"
proc = subprocess.run(
    [sys.executable, "-m", "mdpkit.cli", "solve", str(path), "--out", str(out)],
    capture_output=True, text=True)
report = json.loads(proc.stdout)
print("\ncli solve value:", report["value"], " residual:", report["residual"])
print("artifacts:", sorted(p.name for p in out.iterdir()))

# compare: same instance against itself is trivially consistent.
proc = subprocess.run(
    [sys.executable, "-m", "mdpkit.cli", "compare", str(path), str(path),
     "--trials", "4"],
    capture_output=True, text=True)
print("cli compare verdict:", json.loads(proc.stdout)["verdict"])

# gen writes a fresh random model file; exit codes signal failures (2 bad
# input, 3 shape mismatch, 4 conversion precondition, 5 non-convergence).
proc = subprocess.run(
    [sys.executable, "-m", "mdpkit.cli", "gen", "--states", "4", "--actions", "3",
     "--seed", "8", "--out", str(workdir / "random.json")],
    capture_output=True, text=True)
print("cli gen exit code:", proc.returncode)
print("generated keys:", sorted(json.loads((workdir / "random.json")
                                           .read_text()).keys()))
