"""Smoke test for the edgecache Python extension.

Builds the extension with cargo, loads it from the target directory and
exercises each exposed entry point once.
"""

import importlib.util
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_extension():
    subprocess.run(["cargo", "build", "-p", "edgecache-py"], cwd=ROOT, check=True)
    suffix = {"darwin": "dylib", "win32": "dll"}.get(sys.platform, "so")
    prefix = "" if sys.platform == "win32" else "lib"
    built = ROOT / "target" / "debug" / f"{prefix}edgecache_py.{suffix}"
    tmp = pathlib.Path(tempfile.mkdtemp())
    target = tmp / ("edgecache_py.pyd" if sys.platform == "win32" else "edgecache_py.so")
    shutil.copy(built, target)
    spec = importlib.util.spec_from_file_location("edgecache_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    ec = load_extension()

    p = ec.zipf_pmf(1.0, 3)
    assert all(math.isclose(a, b, rel_tol=1e-12) for a, b in zip(p, [6 / 11, 3 / 11, 2 / 11])), p

    a = ec.Model.predictor(5, 2, 8, 1)
    b = ec.Model.predictor(5, 2, 8, 2)
    avg = ec.fedavg([a, b], [1.0, 1.0])
    expect = [(x + y) / 2 for x, y in zip(a.flat(), b.flat())]
    assert max(abs(x - y) for x, y in zip(avg.flat(), expect)) < 1e-12
    assert ec.Model.from_bytes(avg.to_bytes()).digest() == avg.digest()

    after = ec.decode_action([0.9, 0.1, 0.8, 0.2, 0.5], [2, 4], 2, [1, 3])
    assert sorted(after) == [1, 3], after

    cfg = ec.Config(policy="lru", seed=3, test_slots=64)
    cfg.validate()
    assert cfg.get("policy") == "LRU"
    out = ec.run_experiment(cfg)
    assert out["metrics_csv"].splitlines()[0] == ec.CSV_HEADER
    assert 0.0 <= out["mean_h0"] <= 1.0 and out["audit_clean"]

    try:
        ec.Config(no_such_key=1)
    except ValueError as e:
        assert "config" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    for name, err in ec.gradcheck(n_contents=5, window=2, predictor_hidden=8, hidden=8, draws=2):
        assert err <= 1e-4, (name, err)

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
