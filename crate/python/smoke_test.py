"""Smoke test for the Python extension.

Build it first:

    cargo build -p shiftlab-py --release --features extension-module
    cp target/release/libshiftlab_py.so python/shiftlab.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import shiftlab  # noqa: E402


def main():
    mu = shiftlab.Ljsd.diatomic(2.0, 0.5)
    assert len(mu) == 2
    s, s_star = mu.scales()
    assert abs(s - 1.0) < 1e-12, s

    same = shiftlab.Ljsd(mu.atoms(), mu.label)
    assert shiftlab.compare(shiftlab.Ljsd.diatomic(3, 1), shiftlab.Ljsd.diatomic(3, 0.5)) == "first_easier"
    assert shiftlab.compare(same, mu) == "equal"

    st = shiftlab.solve(mu, "relu", 0.5, 0.25, 0.1, 0.1)
    assert st["residual"] < 1e-12 and st["x"] > 0

    p = shiftlab.predict(mu, "relu", 0.5, 0.25, 0.1, 0.1)
    assert math.isclose(p["error"], p["bias"] + p["variance"], rel_tol=1e-12)

    g, err, at_edge = shiftlab.optimal_gamma(mu, "relu", 0.5, 0.25, 0.1)
    assert g > 0 and err <= p["error"] + 1e-12 and not at_edge

    est = shiftlab.simulate(mu, "relu", 32, 0.5, 2.0, 0.1, 0.1, trials=4, replicates=2, n_test=50, seed=1)
    assert math.isfinite(est["error"]) and est["trials"] == 4

    try:
        shiftlab.Ljsd.parse("diatomic:2")
    except ValueError:
        pass
    else:
        raise AssertionError("bad spec accepted")

    print("python smoke test ok:", p)


if __name__ == "__main__":
    main()
