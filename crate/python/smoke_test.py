"""Smoke test for the pshlab_py extension module.

Builds the cdylib with cargo if needed, loads it, and exercises the main
types end to end: catalog domains, distances, the bounded exhaustion, the
approximant, and the special functions.

Run from the repository root:  python python/smoke_test.py
"""

import json
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    lib = ROOT / "target" / "debug" / "libpshlab_py.so"
    if not lib.exists():
        subprocess.run(
            ["cargo", "build", "-p", "pshlab-py"], cwd=ROOT, check=True
        )
    stage = Path(tempfile.mkdtemp(prefix="pshlab_py_"))
    shutil.copy2(lib, stage / "pshlab_py.so")
    sys.path.insert(0, str(stage))
    import pshlab_py

    return pshlab_py


def main():
    m = load_module()

    names = m.catalog_names()
    assert "ball" in names and "ll_cusp" in names, names

    # Special functions: W0(e) = 1 and the cusp tip value.
    assert abs(m.lambert_w0(math.e) - 1.0) < 1e-12
    assert abs(m.cusp_profile(1 / math.e) - (1 + 1 / math.e)) < 1e-12
    w = m.lambert_wm1(-0.1)
    assert abs(w * math.exp(w) + 0.1) < 1e-12
    assert m.omega_ratio(1e-3) < m.omega_ratio(1e-2)

    # Domain geometry on the unit ball in C^1.
    ball = m.Domain("ball", {"n": 1.0})
    assert ball.real_dim() == 2
    assert ball.is_inside([0.1, 0.2])
    assert not ball.is_inside([1.2, 0.0])
    d = ball.distance_to_boundary([0.6, 0.0])
    assert abs(d - 0.4) < 1e-6, d
    assert ball.check_segment_property(20, 5)
    pts = ball.sample_interior(25, 3)
    assert len(pts) == 25 and all(len(p) == 2 for p in pts)

    # Bounded exhaustion: negative inside, sane trace, bounds report.
    exh = m.Exhaustion(ball, rho=0.7, seed=7)
    assert exh.gamma > 1.0 and exh.lambda_constant > 0.0
    grid = exh.eps_grid()
    assert grid == sorted(grid, reverse=True) and grid[-1] == 1e-10
    for p in pts[:10]:
        assert exh.w(p) < 0.0
    trace = exh.trace([0.5, 0.0])
    assert len(trace) >= len(grid)
    report = json.loads(exh.check_bounds(40, 9))
    assert report["negative"] and report["upper_holds"], report

    # Approximant: refining nu does not worsen the sup deviation (the
    # absolute deviation carries the curvature-correction factor, so only
    # the monotone refinement property is asserted here).
    nu = 0.1 * ball.eps_w()
    coarse, tested = m.Approximant(ball, "re_z1", nu, seed=7).sup_deviation(400, 11)
    fine, _ = m.Approximant(ball, "re_z1", nu / 2, seed=7).sup_deviation(400, 11)
    assert tested > 0 and math.isfinite(coarse)
    assert fine <= coarse * 1.05 + 1e-12, (fine, coarse)

    const, _ = m.Approximant(ball, "constant", nu, seed=7).sup_deviation(200, 11)
    assert const <= 1e-12, const

    print("smoke test passed")


if __name__ == "__main__":
    main()
