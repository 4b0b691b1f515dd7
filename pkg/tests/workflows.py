"""Multi-process training helpers shared by the engine and acceptance tests."""

import glob
import json
import os
import re
import signal
import subprocess
import sys
import time

from dismec.data import save_xmc
from dismec.powerlaw import PowerLawSpec, generate_powerlaw


def small_dataset(n_labels=38, seed=3, n_features=300):
    spec = PowerLawSpec(n_labels=n_labels, head_size=60, beta=1.0, n_features=n_features,
                        prototype_nnz=10, noise_nnz=5, seed=seed)
    return generate_powerlaw(spec)


def write_dataset(ds, path):
    save_xmc(ds, path)
    return str(path)


def model_bytes(model_dir):
    """Map block file name -> bytes for every block of a model."""
    out = {}
    for p in sorted(glob.glob(os.path.join(model_dir, "blocks", "block_*.dsmb"))):
        with open(p, "rb") as fh:
            out[os.path.basename(p)] = fh.read()
    return out


def train_cmd(data, out, *extra):
    return [sys.executable, "-m", "dismec", "-v", "train", "--data", str(data), "--out", str(out),
            *map(str, extra)]


def launch_workers(n, data, out, *extra):
    procs = []
    for i in range(n):
        cmd = train_cmd(data, out, "--worker-id", f"w{i}", *extra)
        procs.append(subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE))
    return procs


def wait_all(procs, timeout=300):
    """Wait for every worker; return their stderr texts."""
    errs = []
    for p in procs:
        _, err = p.communicate(timeout=timeout)
        if p.returncode != 0:
            raise RuntimeError(f"worker failed ({p.returncode}): {err.decode()}")
        errs.append(err.decode())
    return errs


def done_workers(model_dir):
    """batch id -> worker id recorded in its done marker."""
    out = {}
    for p in glob.glob(os.path.join(model_dir, "claims", "batch_*.done")):
        b = int(os.path.basename(p)[len("batch_"):-len(".done")])
        with open(p) as fh:
            out[b] = json.load(fh)["worker"]
    return out


def _held_batch(model_dir, worker_id, finished):
    """A batch claimed by ``worker_id`` that has no done marker, if any."""
    claims = os.path.join(model_dir, "claims")
    for p in glob.glob(os.path.join(claims, "batch_*.claim")):
        b = int(os.path.basename(p)[len("batch_"):-len(".claim")])
        if b in finished:
            continue
        try:
            with open(p) as fh:
                owner = json.load(fh)["worker"]
        except (OSError, ValueError, KeyError):
            continue  # being written or taken over
        if owner == worker_id and not os.path.exists(p[: -len(".claim")] + ".done"):
            return b
    return None


def kill_mid_batch(proc, model_dir, worker_id, timeout=120):
    """SIGKILL ``proc`` while it holds an unfinished claim after finishing a batch.

    Returns the batch it was working on, or None if it exited first.
    """
    deadline = time.time() + timeout
    while time.time() < deadline:
        finished = done_workers(model_dir)
        if worker_id in finished.values():
            b = _held_batch(model_dir, worker_id, finished)
            if b is not None:
                proc.send_signal(signal.SIGKILL)
                proc.wait()
                return b
        if proc.poll() is not None:
            return None
        time.sleep(0.002)
    proc.kill()
    raise TimeoutError(f"{worker_id} never got past its first batch")


def trained_batches(stderr_text):
    """Batch ids a verbose worker reports as trained by itself."""
    return [int(m.group(1)) - 1 for m in _DONE_RE.finditer(stderr_text)]


_DONE_RE = re.compile(r"batch (\d+)/\d+ done by")
