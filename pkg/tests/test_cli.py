"""End-to-end CLI runs against temp configs: artifacts, exit codes, determinism."""
import hashlib
import json
import math

import pytest

from bpire.cli import main, run_experiment


def write_config(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_json(tmp_path, rel):
    return json.loads((tmp_path / rel).read_text())


def test_validate_kind(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "v.toml",
        'kind = "validate"\n[law]\nfamily = "gaussian"\nsigma = 1.0\n',
    )
    out = tmp_path / "out"
    assert run_experiment("validate", cfg, out_dir=str(out)) == 0
    rep = read_json(out, "validate.json")
    assert rep["a1_ok"] and rep["a2_ok"] and rep["a3_ok"]
    assert rep["family"] == "gaussian"
    man = read_json(out, "manifest.json")
    assert man["kind"] == "validate"
    assert man["artifacts"] == ["validate.json"]
    assert man["config_sha256"] == hashlib.sha256(open(cfg, "rb").read()).hexdigest()
    assert "wrote" in capsys.readouterr().out


def test_estimate_constant_env_exact(tmp_path):
    cfg = write_config(
        tmp_path, "e.toml",
        'kind = "estimate"\nn = 12\nnsamples = 4096\nseed = 9\n'
        '[law]\nfamily = "degenerate"\n'
        '[regime]\nkind = "fixed_i"\ni = 3\n',
    )
    out = tmp_path / "out"
    assert run_experiment("estimate", cfg, out_dir=str(out)) == 0
    res = read_json(out, "estimate.json")
    assert res["mean"] == pytest.approx(1.0 / (12 * 9), rel=1e-13)
    assert res["stderr"] == 0.0
    assert res["i"] == 3
    assert res["seed"] == 9
    assert not res["budget_exhausted"]


def test_cli_seed_overrides_config(tmp_path):
    cfg = write_config(
        tmp_path, "e.toml",
        'kind = "estimate"\nn = 8\nnsamples = 4096\nseed = 9\n'
        '[law]\nfamily = "gaussian"\nsigma = 1.0\n'
        '[regime]\nkind = "fixed_gap"\ngap = 2\n',
    )
    out1, out2, out3 = (tmp_path / d for d in ("a", "b", "c"))
    assert run_experiment("estimate", cfg, out_dir=str(out1)) == 0
    assert run_experiment("estimate", cfg, seed=10, out_dir=str(out2)) == 0
    assert run_experiment("estimate", cfg, seed=9, out_dir=str(out3)) == 0
    r1, r2, r3 = (read_json(o, "estimate.json") for o in (out1, out2, out3))
    assert r1["seed"] == 9 and r2["seed"] == 10
    assert r1["mean"] != r2["mean"]
    assert r1["mean"] == r3["mean"]


def test_main_argv_interface(tmp_path):
    cfg = write_config(
        tmp_path, "e.toml",
        'kind = "estimate"\nn = 6\nnsamples = 4096\n'
        '[law]\nfamily = "degenerate"\n'
        '[regime]\nkind = "fixed_i"\ni = 0\n',
    )
    out = tmp_path / "out"
    code = main(["estimate", "--config", cfg, "--seed", "3", "--out", str(out)])
    assert code == 0
    res = read_json(out, "estimate.json")
    assert res["mean"] == pytest.approx(1.0 / (6 * 7), rel=1e-13)


def test_sweep_artifacts_and_plot(tmp_path):
    cfg = write_config(
        tmp_path, "s.toml",
        'kind = "sweep"\nn_grid = [4, 8, 16]\nnsamples = 4096\nseed = 1\n'
        '[law]\nfamily = "degenerate"\n'
        '[regime]\nkind = "fixed_gap"\ngap = 1\n',
    )
    out = tmp_path / "out"
    assert run_experiment("sweep", cfg, out_dir=str(out)) == 0
    csv = (out / "sweep.csv").read_text().splitlines()
    assert csv[0] == "n,i,estimate,stderr,nsamples,seed"
    assert len(csv) == 4
    slope = read_json(out, "slope.json")
    assert slope["slope"] == pytest.approx(-1.0, abs=1e-10)  # exact 1/n law
    plot = (out / "plot.csv").read_text().splitlines()
    assert plot[0] == "log_n,log_est,log_fit"
    for ln in plot[1:]:
        log_n, log_est, log_fit = map(float, ln.split(","))
        assert log_est == pytest.approx(log_fit, abs=1e-9)
        assert log_est == pytest.approx(-log_n, abs=1e-9)


def test_sweep_json_format_and_no_plot(tmp_path):
    cfg = write_config(
        tmp_path, "s.toml",
        'kind = "sweep"\nn_grid = [4, 8]\nnsamples = 4096\nemit_plot = false\n'
        'format = "json"\n'
        '[law]\nfamily = "degenerate"\n'
        '[regime]\nkind = "fixed_i"\ni = 1\n',
    )
    out = tmp_path / "out"
    assert run_experiment("sweep", cfg, out_dir=str(out)) == 0
    rows = read_json(out, "sweep.json")
    assert [r["n"] for r in rows] == [4, 8]
    assert not (out / "sweep.csv").exists()
    assert not (out / "plot.csv").exists()
    assert not (out / "slope.json").exists()  # two points are not fittable


def test_sweep_determinism_across_workers(tmp_path):
    cfg = write_config(
        tmp_path, "s.toml",
        'kind = "sweep"\nn_grid = [4, 8, 16]\nnsamples = 16384\nseed = 77\n'
        '[law]\nfamily = "uniform"\nhalf_width = 1.0\n'
        '[regime]\nkind = "proportional"\nrho = 0.5\n',
    )
    texts = []
    for k, workers in enumerate((1, 2)):
        out = tmp_path / f"w{k}"
        assert run_experiment("sweep", cfg, workers=workers, out_dir=str(out)) == 0
        texts.append((out / "sweep.csv").read_bytes())
    assert texts[0] == texts[1]


def test_unknown_config_key_is_rejected_with_location(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "bad.toml",
        'kind = "estimate"\nn = 8\nnsamples = 64\nrel_see = 0.1\n'
        '[law]\nfamily = "gaussian"\nsigma = 1.0\n'
        '[regime]\nkind = "fixed_i"\ni = 1\n',
    )
    assert run_experiment("estimate", cfg, out_dir=str(tmp_path / "o")) == 1
    err = capsys.readouterr().err
    assert "rel_see" in err
    assert "line" in err


def test_kind_mismatch_rejected(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "c.toml",
        'kind = "sweep"\nn_grid = [4]\nnsamples = 64\n'
        '[law]\nfamily = "gaussian"\nsigma = 1.0\n'
        '[regime]\nkind = "fixed_i"\ni = 1\n',
    )
    assert run_experiment("estimate", cfg, out_dir=str(tmp_path / "o")) == 1
    assert "kind" in capsys.readouterr().err


def test_config_error_paths(tmp_path, capsys):
    assert run_experiment("estimate", str(tmp_path / "missing.toml")) == 1
    assert "missing.toml" in capsys.readouterr().err

    bad_law = write_config(
        tmp_path, "law.toml",
        'kind = "validate"\n[law]\nfamily = "gaussian"\nsigm = 1.0\n',
    )
    assert run_experiment("validate", bad_law, out_dir=str(tmp_path / "o1")) == 1
    assert "sigm" in capsys.readouterr().err

    both_targets = write_config(
        tmp_path, "t.toml",
        'kind = "estimate"\nn = 8\nnsamples = 64\nrel_se = 0.1\n'
        '[law]\nfamily = "gaussian"\nsigma = 1.0\n'
        '[regime]\nkind = "fixed_i"\ni = 1\n',
    )
    assert run_experiment("estimate", both_targets, out_dir=str(tmp_path / "o2")) == 1

    assert run_experiment("nonsense", bad_law) == 1

    bad_regime = write_config(
        tmp_path, "r.toml",
        'kind = "estimate"\nn = 8\nnsamples = 64\n'
        '[law]\nfamily = "gaussian"\nsigma = 1.0\n'
        '[regime]\nkind = "fixed_i"\ngap = 1\n',
    )
    assert run_experiment("estimate", bad_regime, out_dir=str(tmp_path / "o3")) == 1


def test_renewal_artifacts(tmp_path):
    cfg = write_config(
        tmp_path, "r.toml",
        'kind = "renewal"\nx_grid_u = [0.0, 0.5, 1.0]\nx_grid_v = [-1.0, -0.5, 0.0]\n'
        'paths = 2000\ncap = 40000\nlam = 1.0\nseed = 5\n'
        '[law]\nfamily = "gaussian"\nsigma = 1.0\n',
    )
    out = tmp_path / "out"
    assert run_experiment("renewal", cfg, out_dir=str(out)) == 0
    u_lines = (out / "renewal_U.csv").read_text().splitlines()
    assert u_lines[0].startswith("# cap=40000")
    assert u_lines[3] == "x,value,stderr"
    first = u_lines[4].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == 1.0
    norm = read_json(out, "normalizers.json")
    assert norm["lam"] == 1.0
    assert 0.0 < norm["c1"] <= 1.0
    assert 0.0 < norm["c2"] <= 1.0


def test_oracle_with_explicit_increments(tmp_path):
    cfg = write_config(
        tmp_path, "o.toml",
        'kind = "oracle"\nreps = 50000\nincrements = [0.0, 0.0, 0.0]\n'
        'convention = "strict"\nseed = 2\n',
    )
    out = tmp_path / "out"
    assert run_experiment("oracle", cfg, out_dir=str(out)) == 0
    lines = (out / "oracle.csv").read_text().splitlines()
    header, rows = lines[0], lines[1:]
    assert header.split(",")[0] == "i"
    got = {int(r.split(",")[0]): float(r.split(",")[1]) for r in rows if not r.startswith("#")}
    # frequencies near the exact strict values 1/((n+1)(n-i)) with n = 3
    for i, want in [(0, 1.0 / 12), (1, 1.0 / 8), (2, 1.0 / 4)]:
        assert abs(got[i] - want) < 0.02, (i, got[i], want)


def test_oracle_overflow_exit_code(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "o.toml",
        'kind = "oracle"\nreps = 200\nincrements = [40.0, 40.0, 40.0, 40.0, 40.0]\n',
    )
    assert run_experiment("oracle", cfg, out_dir=str(tmp_path / "out")) == 2
    assert "overflow" in capsys.readouterr().err.lower()


def test_identities_bundle_passes(tmp_path):
    cfg = write_config(
        tmp_path, "i.toml",
        'kind = "identities"\nn = 8\nreps = 60000\nenv_samples = 8\n'
        'branch_reps = 20000\nseed = 4\n'
        '[law]\nfamily = "gaussian"\nsigma = 1.0\n',
    )
    out = tmp_path / "out"
    assert run_experiment("identities", cfg, out_dir=str(out)) == 0
    rep = read_json(out, "identities.json")
    names = {c["name"] for c in rep["checks"]}
    assert {"duality_tau_vs_max", "tilted_factorization", "convention_bridge",
            "survivor_partition"} <= names
    assert all(c["ok"] for c in rep["checks"])


def test_identities_violation_exit_code(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "i.toml",
        'kind = "identities"\nn = 8\nreps = 60000\nenv_samples = 8\n'
        'branch_reps = 20000\nseed = 4\nz_max = 1e-9\n'
        '[law]\nfamily = "gaussian"\nsigma = 1.0\n',
    )
    out = tmp_path / "out"
    assert run_experiment("identities", cfg, out_dir=str(out)) == 3
    assert "identity violation" in capsys.readouterr().err
    # the report is still written for post-mortem reading
    rep = read_json(out, "identities.json")
    assert any(not c["ok"] for c in rep["checks"])


def test_workers_env_variable(tmp_path, monkeypatch, capsys):
    cfg = write_config(
        tmp_path, "e.toml",
        'kind = "estimate"\nn = 6\nnsamples = 4096\n'
        '[law]\nfamily = "degenerate"\n'
        '[regime]\nkind = "fixed_i"\ni = 1\n',
    )
    monkeypatch.setenv("BPIRE_WORKERS", "not_an_int")
    assert run_experiment("estimate", cfg, out_dir=str(tmp_path / "o")) == 1
    assert "BPIRE_WORKERS" in capsys.readouterr().err
    monkeypatch.setenv("BPIRE_WORKERS", "2")
    out = tmp_path / "o2"
    assert run_experiment("estimate", cfg, out_dir=str(out)) == 0
    assert read_json(out, "manifest.json")["workers"] == 2
