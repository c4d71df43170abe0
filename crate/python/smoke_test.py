#!/usr/bin/env python3
"""Smoke test for the radtouch_py extension module.

Builds are produced by `cargo build -p radtouch-py`; this script copies the
cdylib next to itself under the importable name and exercises the bindings.

Usage: python3 python/smoke_test.py [path/to/libradtouch_py.so]
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    if len(sys.argv) > 1:
        return Path(sys.argv[1])
    for profile in ("debug", "release"):
        candidate = REPO_ROOT / "target" / profile / "libradtouch_py.so"
        if candidate.exists():
            return candidate
    sys.exit(
        "libradtouch_py.so not found; run `cargo build -p radtouch-py` first"
    )


def import_module(cdylib: Path):
    stage = Path(tempfile.mkdtemp(prefix="radtouch_py_"))
    shutil.copy2(cdylib, stage / "radtouch_py.so")
    sys.path.insert(0, str(stage))
    import radtouch_py

    return radtouch_py


def check(label: str, condition: bool) -> None:
    if not condition:
        sys.exit(f"FAIL: {label}")
    print(f"ok: {label}")


def main() -> None:
    rt = import_module(locate_cdylib())

    radar = rt.RadarConfig()
    resolution = radar.range_resolution_cm()
    expected = 299_792_458.0 / (2.0 * 4.874e9) * 100.0
    check(
        "range resolution matches c / (2 f_BW)",
        math.isclose(resolution, expected, rel_tol=1e-12),
    )
    check(
        "oversampled bin is resolution / oversampling",
        math.isclose(
            radar.oversampled_bin_cm(), resolution / radar.oversampling, rel_tol=1e-12
        ),
    )
    check("half spectrum has 256 bins", radar.n_range_bins() == 256)

    geometry = rt.DisplayGeometry()
    x0, y0 = rt.gt_to_radar_coords(0.0, 0.0, geometry)
    x1, y1 = rt.gt_to_radar_coords(1.0, 1.0, geometry)
    check("origin corner maps to the area offset", (x0, y0) == (1.0, -1.5))
    check(
        "far corner maps to offset plus extent",
        math.isclose(x1, 1.0 + 34.3) and math.isclose(y1, -(1.5 + 17.8)),
    )

    r_max = rt.compute_r_max(geometry, radar)
    diagonal = math.hypot(geometry.d_l, geometry.d_w)
    check(
        "r_max covers the touch-area diagonal",
        r_max * radar.oversampled_bin_cm() >= diagonal,
    )

    sensors = rt.SensorArray()
    check("default array has four sensors", len(sensors) == 4)
    target = (17.0, -9.0)
    ranges = [sensors.range_to(i, target) for i in range(len(sensors))]
    fix = rt.solve_position(ranges)
    err = math.hypot(fix.x_cm - target[0], fix.y_cm - target[1])
    check("exact ranges recover the target within 1e-6 cm", err < 1e-6)
    check("solver reports convergence", fix.converged)
    check("all four sensors used", fix.n_sensors_used == 4)

    three = list(ranges)
    three[2] = None
    fix3 = rt.solve_position(three)
    err3 = math.hypot(fix3.x_cm - target[0], fix3.y_cm - target[1])
    check("three-sensor solve still recovers the target", err3 < 1e-6)
    check("dropped sensor reflected in the fix", fix3.n_sensors_used == 3)

    try:
        rt.solve_position([ranges[0], None, None, None])
    except RuntimeError:
        print("ok: under-determined solve raises RuntimeError")
    else:
        sys.exit("FAIL: under-determined solve should raise")

    values = [5.0, 1.0, 4.0, 2.0, 3.0]
    check(
        "median by nearest rank",
        rt.percentile_nearest_rank(values, 0.5) == 3.0,
    )
    check(
        "p90 by nearest rank",
        rt.percentile_nearest_rank(values, 0.9) == 5.0,
    )
    try:
        rt.percentile_nearest_rank(values, 0.0)
    except ValueError:
        print("ok: percentile rejects p = 0")
    else:
        sys.exit("FAIL: percentile should reject p = 0")

    try:
        rt.RadarConfig(n_sensors=0)
    except ValueError:
        print("ok: invalid radar config raises ValueError")
    else:
        sys.exit("FAIL: invalid radar config should raise")

    print("smoke test passed")


if __name__ == "__main__":
    main()
