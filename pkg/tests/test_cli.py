import json

import pytest

from kinlab import cli


def _write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _run(tmp_path, command, cfg, out="out", jobs=1):
    path = _write(tmp_path, f"{command}.json", cfg)
    outdir = tmp_path / out
    code = cli.main([command, "--config", path, "--jobs", str(jobs),
                     "--out", str(outdir)])
    report = None
    rp = outdir / "report.json"
    if rp.exists():
        report = json.loads(rp.read_text())
    return code, report, outdir


def test_unknown_key_is_config_error(tmp_path):
    code, _, _ = _run(tmp_path, "verify-geometry", {"seed": 1, "bogus": 2})
    assert code == 3


def test_missing_seed_is_config_error(tmp_path):
    code, _, _ = _run(tmp_path, "verify-geometry", {"samples": 5})
    assert code == 3


def test_unreadable_config_is_config_error(tmp_path):
    outdir = tmp_path / "o"
    assert cli.main(["covering", "--config", str(tmp_path / "missing.json"),
                     "--out", str(outdir)]) == 3


def test_bad_jobs_is_usage_error(tmp_path):
    path = _write(tmp_path, "c.json", {"seed": 1})
    assert cli.main(["covering", "--config", path, "--jobs", "0",
                     "--out", str(tmp_path / "o")]) == 3


def test_geometry_vacuous_with_warning(tmp_path):
    code, report, _ = _run(tmp_path, "verify-geometry",
                           {"seed": 1, "samples": 0})
    assert code == 0
    assert report["warnings"]


def test_geometry_small_run_passes(tmp_path):
    code, report, outdir = _run(tmp_path, "verify-geometry",
                                {"seed": 7, "samples": 120})
    assert code == 0
    assert report["passed"]
    assert (outdir / "distance_samples.csv").exists()
    header = (outdir / "distance_samples.csv").read_text().splitlines()[0]
    assert header == "index,distance,sup_norm"


def test_geometry_strict_optimality_tol_fails(tmp_path):
    code, report, _ = _run(tmp_path, "verify-geometry",
                           {"seed": 7, "samples": 10,
                            "optimality_tol": -1.0})
    assert code == 2
    rec = {r["check"]: r for r in report["records"]}
    assert not rec["optimality_instances"]["passed"]
    assert rec["triangle_inequality"]["passed"]


def test_reports_deterministic(tmp_path):
    cfg = {"seed": 3, "samples": 60}
    _, r1, o1 = _run(tmp_path, "verify-geometry", cfg, out="a")
    _, r2, o2 = _run(tmp_path, "verify-geometry", cfg, out="b")
    r1.pop("wall_clock_s")
    r2.pop("wall_clock_s")
    assert r1 == r2
    assert (o1 / "distance_samples.csv").read_bytes() == \
        (o2 / "distance_samples.csv").read_bytes()


def test_kernel_unsupported_dimension(tmp_path):
    code, _, _ = _run(tmp_path, "verify-kernel", {"seed": 1, "d": 3})
    assert code == 3


def test_harnack_constant_profile(tmp_path):
    code, report, outdir = _run(tmp_path, "harnack",
                                {"seed": 1, "instances": 2,
                                 "profile": "constant"})
    assert code == 0
    for rec in report["records"]:
        assert rec["quotient"] == 1.0
    assert (outdir / "quotients.csv").exists()


def test_harnack_nonpositive_data_fails(tmp_path):
    code, report, _ = _run(tmp_path, "harnack",
                           {"seed": 1, "instances": 1, "floor": -2.0})
    assert code == 2
    assert "error" in report["records"][0]


def test_covering_small_run(tmp_path):
    code, report, outdir = _run(tmp_path, "covering",
                                {"seed": 2, "families": 50,
                                 "maximal_fields": 1, "n": 24,
                                 "geometry": "parabolic", "ink_spots": 1})
    assert code == 0
    assert report["passed"]
    lines = (outdir / "interval_stacking.csv").read_text().splitlines()
    assert len(lines) == 51


def test_covering_vacuous_families_warn(tmp_path):
    code, report, _ = _run(tmp_path, "covering",
                           {"seed": 2, "families": 0, "maximal_fields": 1,
                            "n": 24})
    assert code == 0
    assert any("vacuous" in w for w in report["warnings"])


def test_holder_scan_constant_sentinel_and_jobs(tmp_path):
    code, report, outdir = _run(tmp_path, "holder-scan",
                                {"seed": 5, "instances": 2, "n": 96},
                                jobs=2)
    assert code == 0
    rows = (outdir / "alphas.csv").read_text().splitlines()
    assert rows[0] == "index,alpha,constant,fit_residual,monotone"
    assert [r.split(",")[0] for r in rows[1:]] == ["0", "1"]
    assert report["config_hash"]
