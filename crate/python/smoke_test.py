#!/usr/bin/env python3
"""Builds the voxsurf_py extension module and runs an end-to-end smoke check.

Usage: python3 python/smoke_test.py
"""

import math
import os
import shutil
import subprocess
import sys
import sysconfig
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build_and_import():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "voxsurf-py"],
        cwd=ROOT,
        check=True,
    )
    if sys.platform == "darwin":
        built = "libvoxsurf_py.dylib"
    elif sys.platform.startswith("win"):
        built = "voxsurf_py.dll"
    else:
        built = "libvoxsurf_py.so"
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    stage = tempfile.mkdtemp(prefix="voxsurf_py_")
    shutil.copy(
        os.path.join(ROOT, "target", "release", built),
        os.path.join(stage, "voxsurf_py" + suffix),
    )
    sys.path.insert(0, stage)
    import voxsurf_py

    return voxsurf_py


def main():
    vx = build_and_import()
    sensor = (0.0, 0.0, 1.8)

    # sparse scan and denser ground truth of the built-in scene
    pts = vx.scan_scene(seed=1, layers=32, steps=360, range_max=12.0, sensor=sensor)
    gt = vx.scan_scene(seed=0, layers=128, steps=720, range_max=12.0, sensor=sensor)
    assert len(pts) > 5000, f"scan too sparse: {len(pts)}"
    assert len(gt) > len(pts), "ground truth should be denser"
    print(f"scanned {len(pts)} points, {len(gt)} ground-truth points")

    # reconstruct and sanity-check the mesh
    mesh = vx.reconstruct(pts, sensor=sensor)
    assert len(mesh.vertices) > 1000, f"mesh too small: {len(mesh.vertices)} vertices"
    assert len(mesh.triangles) > 1000
    n_vertices = len(mesh.vertices)
    for tri in mesh.triangles:
        assert all(0 <= i < n_vertices for i in tri)
    print(f"reconstructed {mesh!r}")

    # metrics against the ground-truth set
    report = vx.evaluate(mesh.vertices, gt, sensor=sensor)
    assert report["ae_p_to_gt"] < 0.2, f"accuracy degraded: {report['ae_p_to_gt']}"
    assert report["ae_sym"] == 0.5 * (report["ae_p_to_gt"] + report["ae_gt_to_p"])
    assert report["hd_p_to_gt"] >= report["ae_p_to_gt"]
    fractions = dict(report["delta_curve"])
    assert fractions[1.0] > 0.99
    print(f"ae_sym = {report['ae_sym']:.4f} m, hd_sym = {report['hd_sym']:.4f} m")

    # constant level-1 neighborhood on the same scan: noticeably worse
    noisy = vx.scan_scene(seed=1, layers=32, steps=360, range_max=12.0,
                          noise_sigma=0.01, sensor=sensor)
    fine = vx.reconstruct(noisy, sensor=sensor)
    coarse = vx.reconstruct(noisy, sensor=sensor, mode="cn", fixed_k=1)
    fine_report = vx.evaluate(fine.vertices, gt, sensor=sensor)
    coarse_report = vx.evaluate(coarse.vertices, gt, sensor=sensor)
    assert fine_report["ae_sym"] < coarse_report["ae_sym"], (
        fine_report["ae_sym"], coarse_report["ae_sym"])
    print(f"an-gc ae_sym {fine_report['ae_sym']:.4f} < cn(k=1) "
          f"ae_sym {coarse_report['ae_sym']:.4f}")

    # statistics grid surface
    grid = vx.StatGrid(0.5, (0.0, 0.0, 0.0))
    grid.insert([(0.1, 0.1, 0.1), (0.2, 0.2, 0.2)])
    assert grid.point_count() == 2
    assert grid.voxel_count() == 1
    count, mean, cov = grid.neighborhood((1, 1, 1), 1)
    assert count == 2
    assert all(math.isclose(m, 0.15) for m in mean)
    assert math.isclose(cov[0][0], 0.0025)
    print(f"grid: {grid!r}, neighborhood mean {mean}")

    # mesh writing round-trips through the CLI-compatible PLY format
    out_dir = tempfile.mkdtemp(prefix="voxsurf_mesh_")
    ply_path = os.path.join(out_dir, "mesh.ply")
    mesh.save_ply(ply_path)
    with open(ply_path, "rb") as handle:
        header = handle.read(64)
    assert header.startswith(b"ply\nformat binary_little_endian 1.0\n")
    print(f"wrote {ply_path} ({os.path.getsize(ply_path)} bytes)")

    print("PASS python smoke test")


if __name__ == "__main__":
    main()
