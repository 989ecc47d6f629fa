"""Harness contract: config validation, CSV format, CLI behavior."""

import io
import json
import os

import numpy as np
import pytest

from saddle_scale import bench
from saddle_scale.errors import ConfigError


def minimal_config(tmp_path, **overrides):
    cfg = {
        "name": "suite",
        "output_dir": str(tmp_path / "out"),
        "problems": [{"kind": "bilinear", "d": 2, "L": 1.0}],
        "optimizers": [{"method": "extragrad", "T": 40, "gamma": 0.1}],
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def run_main(argv):
    out, err = io.StringIO(), io.StringIO()
    import contextlib
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = bench.main(argv)
    return code, out.getvalue(), err.getvalue()


# ---------------------------------------------------------------------------
# config resolution


def test_defaults_filled_in(tmp_path):
    resolved = bench.resolve_config(minimal_config(tmp_path))
    assert resolved["master_seed"] == 42
    assert resolved["repeats"] == 1
    assert resolved["problems"][0]["sigma"] == 0.0
    assert resolved["problems"][0]["noise_bound"] is None
    opt = resolved["optimizers"][0]
    assert opt["scaling"] == {"preset": "identity", "update_prob": 1.0,
                              "update_every_k": None}
    assert opt["batch"] == 1
    assert opt["averaging"] == "uniform"
    assert opt["expect_divergence"] is False


@pytest.mark.parametrize("mutate,field", [
    (lambda c: c.pop("name"), "name"),
    (lambda c: c.update(name=""), "name"),
    (lambda c: c.update(problems=[]), "problems"),
    (lambda c: c.update(repeats=0), "repeats"),
    (lambda c: c.update(master_seed=-1), "master_seed"),
    (lambda c: c.update(bogus=1), "bogus"),
    (lambda c: c["optimizers"][0].pop("gamma"), "optimizers[0].gamma"),
    (lambda c: c["optimizers"][0].pop("T"), "optimizers[0].T"),
    (lambda c: c["optimizers"][0].update(method="newton"),
     "optimizers[0].method"),
    (lambda c: c["optimizers"][0].update(batch=0), "optimizers[0].batch"),
    (lambda c: c["optimizers"][0].update(extra=1), "optimizers[0].extra"),
    (lambda c: c["problems"][0].update(kind="banana"), "problems[0].kind"),
    (lambda c: c["problems"][0].pop("d"), "problems[0].d"),
    (lambda c: c["problems"][0].update(sigma=-1.0), "problems[0].sigma"),
    (lambda c: c["optimizers"][0].update(scaling={"preset": "sgdm"}),
     "optimizers[0].scaling.preset"),
    (lambda c: c["optimizers"][0].update(
        scaling={"preset": "oasis", "update_prob": 0.5, "update_every_k": 3}),
     "optimizers[0].scaling.update_every_k"),
])
def test_validation_names_offending_field(tmp_path, mutate, field):
    cfg = minimal_config(tmp_path)
    mutate(cfg)
    with pytest.raises(ConfigError) as exc:
        bench.resolve_config(cfg)
    assert exc.value.field == field


def test_quadratic_spec_requires_l_at_least_mu(tmp_path):
    cfg = minimal_config(tmp_path, problems=[
        {"kind": "quadratic", "d_x": 2, "d_y": 2, "mu": 3.0, "L": 1.0}])
    with pytest.raises(ConfigError) as exc:
        bench.resolve_config(cfg)
    assert exc.value.field == "problems[0].L"


def test_digest_ignores_output_dir_but_not_content(tmp_path):
    a = bench.resolve_config(minimal_config(tmp_path))
    b = bench.resolve_config(minimal_config(tmp_path,
                                            output_dir=str(tmp_path / "el")))
    c = bench.resolve_config(minimal_config(tmp_path, master_seed=7))
    assert bench.suite_digest(a) == bench.suite_digest(b)
    assert bench.suite_digest(a) != bench.suite_digest(c)


def test_cell_seeds_distinct_and_stable():
    seeds = [bench.cell_seed(42, k) for k in range(64)]
    assert len(set(seeds)) == 64
    assert seeds == [bench.cell_seed(42, k) for k in range(64)]
    assert bench.cell_seed(7, 0) != bench.cell_seed(42, 0)


# ---------------------------------------------------------------------------
# run subcommand and CSV contract


def test_run_writes_csv_contract(tmp_path):
    cfg = minimal_config(tmp_path)
    code, out, _ = run_main(["run", write_config(tmp_path, cfg)])
    assert code == 0
    assert "master seed 42" in out
    csv_path = tmp_path / "out" / "suite" / "cell_0_0_0.csv"
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,r2_weighted,dist2,grad_norm2,gap,dhat_min,dhat_max,grad_calls"
    assert len(lines) == 1 + 40 + 1  # header + T rows + digest trailer
    assert lines[-1].startswith("# suite_digest=")
    row0 = lines[1].split(",")
    assert row0[0] == "0"
    assert row0[4] == ""  # gap column empty when absent
    assert int(row0[7]) == 2  # extragrad: two calls after the first step

    summary = json.loads((tmp_path / "out" / "suite" / "summary.json")
                         .read_text(encoding="utf-8"))
    assert summary["all_passed"] is True
    assert summary["suite_digest"] == lines[-1].split("=")[1]
    assert summary["resolved_config"]["optimizers"][0]["batch"] == 1
    cell = summary["cells"][0]
    assert cell["csv"] == "cell_0_0_0.csv"
    assert cell["grad_calls"] == 80
    assert cell["final_gap"] is not None  # bilinear supports the gap


def test_csv_floats_roundtrip_exactly(tmp_path):
    cfg = minimal_config(tmp_path, problems=[
        {"kind": "quadratic", "d_x": 2, "d_y": 2, "mu": 0.5, "L": 2.0,
         "sigma": 0.2}])
    code, _, _ = run_main(["run", write_config(tmp_path, cfg)])
    assert code == 0
    from saddle_scale.bench import build_problem, cell_seed
    from saddle_scale.optim import OptimizerConfig, run
    resolved = bench.resolve_config(cfg)
    problem = build_problem(resolved["problems"][0])
    traj = run(problem, OptimizerConfig(
        method="extragrad", T=40, seed=cell_seed(42, 0), gamma=0.1))
    lines = (tmp_path / "out" / "suite" / "cell_0_0_0.csv").read_text().splitlines()
    for rec, line in zip(traj.records, lines[1:]):
        parts = line.split(",")
        assert int(parts[0]) == rec.t
        assert float(parts[1]) == rec.r2_weighted  # 17 digits roundtrip
        assert float(parts[2]) == rec.dist2
        assert float(parts[3]) == rec.grad_norm2
        assert int(parts[7]) == rec.grad_calls


def test_repeats_give_distinct_rows(tmp_path):
    cfg = minimal_config(tmp_path, repeats=2, problems=[
        {"kind": "quadratic", "d_x": 2, "d_y": 2, "mu": 0.5, "L": 2.0,
         "sigma": 0.5}])
    code, _, _ = run_main(["run", write_config(tmp_path, cfg)])
    assert code == 0
    base = tmp_path / "out" / "suite"
    a = (base / "cell_0_0_0.csv").read_text()
    b = (base / "cell_0_0_1.csv").read_text()
    assert a != b  # different derived seeds -> different noise


def test_expected_divergence_exits_zero(tmp_path):
    cfg = minimal_config(tmp_path, optimizers=[
        {"method": "sgda", "T": 5000, "gamma": 0.6,
         "expect_divergence": True}])
    code, _, _ = run_main(["run", write_config(tmp_path, cfg)])
    assert code == 0
    summary = json.loads((tmp_path / "out" / "suite" / "summary.json")
                         .read_text())
    cell = summary["cells"][0]
    assert cell["diverged"] is True
    assert cell["passed"] is True
    # the CSV keeps the prefix recorded before the abort
    lines = (tmp_path / "out" / "suite" / "cell_0_0_0.csv").read_text().splitlines()
    assert len(lines) > 2
    assert lines[-1].startswith("# suite_digest=")


def test_unexpected_divergence_exits_one(tmp_path):
    cfg = minimal_config(tmp_path, optimizers=[
        {"method": "sgda", "T": 5000, "gamma": 0.6}])
    code, _, _ = run_main(["run", write_config(tmp_path, cfg)])
    assert code == 1


def test_missing_gamma_names_field(tmp_path):
    cfg = minimal_config(tmp_path)
    del cfg["optimizers"][0]["gamma"]
    code, _, err = run_main(["run", write_config(tmp_path, cfg)])
    assert code == 2
    assert "optimizers[0].gamma" in err


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"name": "x", ', encoding="utf-8")
    code, _, err = run_main(["run", str(path)])
    assert code == 2
    assert "line 1" in err


def test_missing_file_exits_two(tmp_path):
    code, _, err = run_main(["run", str(tmp_path / "absent.json")])
    assert code == 2


def test_parallel_serial_identical(tmp_path):
    def execute(tag, threads):
        cfg = minimal_config(tmp_path, output_dir=str(tmp_path / tag),
                             repeats=2,
                             problems=[{"kind": "quadratic", "d_x": 3,
                                        "d_y": 2, "mu": 0.5, "L": 2.0,
                                        "sigma": 0.3}],
                             optimizers=[
                                 {"method": "extragrad", "T": 200,
                                  "gamma": None,
                                  "scaling": {"preset": "oasis"}},
                                 {"method": "single-call-momentum", "T": 200,
                                  "gamma": 1e-4, "eta": 1e-4,
                                  "scaling": {"preset": "adam",
                                              "update_prob": 0.5}}])
        os.environ[bench.THREADS_ENV] = str(threads)
        try:
            code, _, _ = run_main(["run", write_config(tmp_path, cfg,
                                                       f"{tag}.json")])
        finally:
            del os.environ[bench.THREADS_ENV]
        assert code == 0
        return tmp_path / tag / "suite"

    serial = execute("serial", 1)
    parallel = execute("parallel", 4)
    names = sorted(p.name for p in serial.glob("*.csv"))
    assert names == sorted(p.name for p in parallel.glob("*.csv"))
    for n in names:
        assert (serial / n).read_bytes() == (parallel / n).read_bytes()


def test_threads_env_validated(tmp_path):
    cfg = minimal_config(tmp_path)
    os.environ[bench.THREADS_ENV] = "many"
    try:
        code, _, err = run_main(["run", write_config(tmp_path, cfg)])
    finally:
        del os.environ[bench.THREADS_ENV]
    assert code == 2
    assert bench.THREADS_ENV in err


# ---------------------------------------------------------------------------
# plotdata


@pytest.fixture()
def run_csv(tmp_path):
    cfg = minimal_config(tmp_path, optimizers=[
        {"method": "extragrad", "T": 100, "gamma": 0.1}])
    code, _, _ = run_main(["run", write_config(tmp_path, cfg)])
    assert code == 0
    return str(tmp_path / "out" / "suite" / "cell_0_0_0.csv")


def test_plotdata_emits_t_value_pairs(run_csv):
    out = io.StringIO()
    assert bench.cmd_plotdata(run_csv, "dist2", out=out) == 0
    lines = out.getvalue().splitlines()
    assert len(lines) == 100
    t, v = lines[0].split()
    assert t == "0"
    assert float(v) > 0


def test_plotdata_stride(run_csv):
    out = io.StringIO()
    assert bench.cmd_plotdata(run_csv, "dist2", stride=10, out=out) == 0
    lines = out.getvalue().splitlines()
    assert len(lines) == 10
    assert [int(l.split()[0]) for l in lines] == list(range(0, 100, 10))


def test_plotdata_log10_transform(run_csv):
    raw, logged = io.StringIO(), io.StringIO()
    assert bench.cmd_plotdata(run_csv, "dist2", out=raw) == 0
    assert bench.cmd_plotdata(run_csv, "dist2", transform="log10",
                              out=logged) == 0
    v0 = float(raw.getvalue().splitlines()[0].split()[1])
    l0 = float(logged.getvalue().splitlines()[0].split()[1])
    assert l0 == pytest.approx(np.log10(v0), rel=1e-15)


def test_plotdata_unknown_metric_lists_columns(run_csv):
    err = io.StringIO()
    assert bench.cmd_plotdata(run_csv, "loss", err=err) == 2
    msg = err.getvalue()
    assert "dist2" in msg and "grad_norm2" in msg and "dhat_min" in msg


def test_plotdata_empty_gap_column_fails(run_csv):
    err = io.StringIO()
    assert bench.cmd_plotdata(run_csv, "gap", out=io.StringIO(),
                              err=err) == 2
    assert "gap" in err.getvalue()


def test_plotdata_bad_stride(run_csv):
    assert bench.cmd_plotdata(run_csv, "dist2", stride=0,
                              err=io.StringIO()) == 2


# ---------------------------------------------------------------------------
# schema and verify plumbing


def test_print_schema_is_json_and_flag_alias():
    code, out, _ = run_main(["print-schema"])
    assert code == 0
    schema = json.loads(out)
    assert schema["required"] == ["name", "problems", "optimizers"]
    code2, out2, _ = run_main(["--print-schema"])
    assert code2 == 0 and json.loads(out2) == schema


def test_schema_matches_validator_on_example(tmp_path):
    # the minimal config passes both the schema's required list and the
    # validator; removing a schema-required key fails the validator too
    cfg = minimal_config(tmp_path)
    schema = bench.SCHEMA
    for key in schema["required"]:
        broken = {k: v for k, v in cfg.items() if k != key}
        with pytest.raises(ConfigError):
            bench.resolve_config(broken)


def test_verify_unknown_name_exits_two():
    err = io.StringIO()
    assert bench.cmd_verify(["no-such-check"], 42, out=io.StringIO(),
                            err=err) == 2
    assert "no-such-check" in err.getvalue()


def test_verify_single_check_table(capsys):
    out = io.StringIO()
    code = bench.cmd_verify(["scalar-inequality"], 42, out=out)
    assert code == 0
    text = out.getvalue()
    assert "scalar-inequality" in text
    assert "pass" in text
    tail = json.loads(text.strip().splitlines()[-1])
    assert tail == {"checks": 1, "failures": []}
