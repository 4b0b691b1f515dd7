"""
Cooperating training processes
==============================

Several processes train the same model directory.  Each claims whole label
batches by exclusively creating a claim file, so no coordinator is needed.
The result is byte-identical to a single-process run.
"""

import glob
import hashlib
import json
import os
import subprocess
import sys
import tempfile

from dismec import PowerLawSpec, generate_powerlaw, save_xmc

work = tempfile.mkdtemp(prefix="dismec-workers-")
spec = PowerLawSpec(n_labels=60, head_size=3000, beta=0.7, n_features=3000, seed=4)
data = os.path.join(work, "train.txt")
save_xmc(generate_powerlaw(spec), data)


def train(out, n_procs):
    cmd = [sys.executable, "-m", "dismec", "train", "--data", data, "--out", out,
           "--batch-size", "5"]
    procs = [subprocess.Popen(cmd + ["--worker-id", f"worker-{i}"],
                              stdout=subprocess.DEVNULL) for i in range(n_procs)]
    for p in procs:
        assert p.wait() == 0


def digests(model_dir):
    out = {}
    for path in sorted(glob.glob(os.path.join(model_dir, "blocks", "*.dsmb"))):
        with open(path, "rb") as fh:
            out[os.path.basename(path)] = hashlib.sha256(fh.read()).hexdigest()[:12]
    return out


train(os.path.join(work, "solo"), 1)
train(os.path.join(work, "team"), 3)

# who trained what
with open(os.path.join(work, "team", "manifest.json")) as fh:
    manifest = json.load(fh)
for entry in manifest["blocks"]:
    print(f"batch {entry['id']:2d}  {entry['worker']}  {entry['digest'][:12]}")

same = digests(os.path.join(work, "solo")) == digests(os.path.join(work, "team"))
print("identical to the single-process model:", same)
