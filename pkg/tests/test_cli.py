"""CLI behavior: commands, exit codes, file outputs, reproducibility."""

import numpy as np
import pytest

from powermesh.cli import main
from powermesh.fields import read_sdfg, analytic_field
from powermesh.mesh import read_obj


def test_missing_out_is_usage_error(capsys):
    rc = main(["extract", "--field", "sphere:0.5"])
    assert rc == 1
    assert "usage error" in capsys.readouterr().err


def test_unknown_field_is_runtime_error(capsys):
    rc = main(["extract", "--field", "blob:1", "--out", "/tmp/x.obj"])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_extract_writes_obj_stats_and_summary(tmp_path, capsys):
    out = tmp_path / "s.obj"
    stats = tmp_path / "s.csv"
    rc = main(["extract", "--field", "sphere:0.5", "--init", "5",
               "--max-points", "200", "--out", str(out),
               "--stats", str(stats)])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "sites" in printed and "queries" in printed
    mesh = read_obj(out)
    assert len(mesh.faces) > 100
    lines = stats.read_text().splitlines()
    assert lines[0] == "iter,inserted,delta,queries,cavity,ms"
    assert len(lines) > 50
    assert all(line.endswith(",0.000") for line in lines[1:])
    # the same job through the library yields the identical, closed surface
    from powermesh.fields import analytic_field
    from powermesh.refinement import RefineConfig, run

    api_mesh, _ = run(analytic_field("sphere:0.5"),
                      RefineConfig(init_resolution=5, k_max=200))
    assert api_mesh.is_closed()
    tm = api_mesh.to_triangle_mesh()
    assert len(tm.vertices) == len(mesh.vertices)
    assert len(tm.faces) == len(mesh.faces)


def test_extract_reproducible_stats_and_counts(tmp_path):
    args = ["extract", "--field", "torus:0.4,0.15", "--init", "5",
            "--max-points", "150"]
    out_a, csv_a = tmp_path / "a.obj", tmp_path / "a.csv"
    out_b, csv_b = tmp_path / "b.obj", tmp_path / "b.csv"
    assert main(args + ["--out", str(out_a), "--stats", str(csv_a)]) == 0
    assert main(args + ["--out", str(out_b), "--stats", str(csv_b)]) == 0
    assert csv_a.read_bytes() == csv_b.read_bytes()
    ma, mb = read_obj(out_a), read_obj(out_b)
    assert len(ma.vertices) == len(mb.vertices)
    assert len(ma.faces) == len(mb.faces)


def test_extract_ply_output(tmp_path):
    out = tmp_path / "s.obj"
    ply = tmp_path / "s.ply"
    rc = main(["extract", "--field", "sphere:0.5", "--init", "4",
               "--max-points", "50", "--out", str(out), "--ply", str(ply)])
    assert rc == 0
    data = ply.read_bytes()
    assert data.startswith(b"ply\nformat binary_little_endian 1.0\n")


def test_baseline_writes_mesh(tmp_path, capsys):
    out = tmp_path / "mc.obj"
    rc = main(["baseline", "--field", "sphere:0.5", "--res", "24",
               "--out", str(out)])
    assert rc == 0
    mesh = read_obj(out)
    assert mesh.is_closed()
    assert "queries 13824" in capsys.readouterr().out


def test_metrics_identical_mesh_perfect(tmp_path, capsys):
    out = tmp_path / "m.obj"
    main(["baseline", "--field", "sphere:0.5", "--res", "16",
          "--out", str(out)])
    capsys.readouterr()
    rc = main(["metrics", "--a", str(out), "--b", str(out),
               "--samples", "2000"])
    assert rc == 0
    block = capsys.readouterr().out
    fields = dict(line.split(" ", 1) for line in block.strip().splitlines())
    assert fields["cd_convention"] == "squared_l2"
    assert float(fields["cd_sq"]) == 0.0
    assert float(fields["nc"]) == pytest.approx(1.0)
    assert float(fields["f1"]) == 1.0


def test_metrics_sample_cap(capsys, tmp_path):
    out = tmp_path / "m.obj"
    main(["baseline", "--field", "sphere:0.5", "--res", "8",
          "--out", str(out)])
    rc = main(["metrics", "--a", str(out), "--b", str(out),
               "--samples", "2000001"])
    assert rc == 1


def test_gen_grid_round_trip(tmp_path):
    out = tmp_path / "t.sdfg"
    rc = main(["gen-grid", "--field", "torus:0.4,0.15", "--res", "24",
               "--out", str(out)])
    assert rc == 0
    grid = read_sdfg(out)
    assert grid.dims == (24, 24, 24)
    field = analytic_field("torus:0.4,0.15")
    # stored values match re-evaluation to f32 rounding
    spacing = grid.spacing
    for (ix, iy, iz) in [(3, 4, 5), (10, 2, 20), (23, 23, 23), (0, 0, 0)]:
        p = (grid.origin[0] + ix * spacing, grid.origin[1] + iy * spacing,
             grid.origin[2] + iz * spacing)
        expect = np.float32(field.eval(p).value)
        assert grid.values[ix, iy, iz] == pytest.approx(float(expect),
                                                        abs=1e-7)


def test_gen_grid_refuses_escaping_zero_set(tmp_path, capsys):
    # zero set pierces the domain walls: face-center boundary nodes go negative
    rc = main(["gen-grid", "--field", "sphere:1.05", "--res", "16",
               "--out", str(tmp_path / "x.sdfg")])
    assert rc == 2
    assert "boundary" in capsys.readouterr().err
    # the canonical torus (outer radius 0.7) is comfortably interior
    rc = main(["gen-grid", "--field", "torus:0.5,0.2", "--res", "16",
               "--out", str(tmp_path / "t.sdfg")])
    assert rc == 0


def test_extract_from_grid_field(tmp_path):
    sdfg = tmp_path / "s.sdfg"
    assert main(["gen-grid", "--field", "sphere:0.5", "--res", "48",
                 "--out", str(sdfg)]) == 0
    out = tmp_path / "g.obj"
    rc = main(["extract", "--field", f"grid:{sdfg}", "--init", "5",
               "--max-points", "300", "--out", str(out)])
    assert rc == 0
    mesh = read_obj(out)
    assert len(mesh.faces) > 200
    # vertices hug the sphere despite the grid approximation
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.percentile(np.abs(r - 0.5), 95) < 0.02
