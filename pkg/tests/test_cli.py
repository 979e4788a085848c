import numpy as np
import pytest

from fedcausal import cli, csvio, defaults, model, pipeline, synth

FAST = ["--set", "ep.rounds=2", "--set", "ep.steps=120", "--set", "ep.burn_in=20"]


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def _fast_settings(case="analyze"):
    ep, ditto, _ = defaults.build(case, {"ep.rounds": "3", "ep.steps": "200", "ep.burn_in": "50",
                                         "ditto.rounds": "2", "ditto.local_steps": "50", "ditto.global_steps": "50"})
    return pipeline.MethodSettings(ep, ditto)


class TestSimulate:
    @pytest.mark.property
    def test_byte_identical_reruns(self, tmp_path):
        for sub in ("a", "b"):
            assert cli.main(["simulate", "--case", "c1", "--reps", "1", "--seed", "7", "--telemetry",
                             "--out", str(tmp_path / sub)] + FAST) == 0
        a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
        assert a == b and set(a) == {"c1_xfbci_replications.csv", "c1_xfbci_aggregate.csv", "c1_xfbci_telemetry.csv"}

    def test_jobs_do_not_change_results(self, tmp_path):
        base = ["simulate", "--case", "c2", "--method", "individual", "--reps", "2", "--seed", "3"] + FAST
        assert cli.main(base + ["--out", str(tmp_path / "one")]) == 0
        assert cli.main(base + ["--jobs", "2", "--out", str(tmp_path / "two")]) == 0
        assert _files(tmp_path / "one") == _files(tmp_path / "two")

    def test_env_output_dir(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
        assert cli.main(["simulate", "--case", "c1", "--method", "central", "--reps", "1"] + FAST) == 0
        assert (tmp_path / "env" / "c1_central_aggregate.csv").exists()
        assert "a_rmse_theta" in capsys.readouterr().out

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("ep.rounds=1\nep.steps=60\nep.burn_in=10\n")
        assert cli.main(["simulate", "--case", "c1", "--reps", "1", "--config", str(cfg), "--out", str(tmp_path)]) == 0

    @pytest.mark.parametrize("extra", [["--set", "ep.lr=abc"], ["--set", "bogus=1"], ["--reps", "0"],
                                       ["--case", "c42"], ["--config", "/nonexistent.cfg"]])
    def test_config_errors_exit_2(self, tmp_path, extra):
        args = ["simulate", "--case", "c1", "--out", str(tmp_path)] + extra
        assert cli.main(args) == 2

    def test_missing_subcommand_exits_2(self):
        assert cli.main([]) == 2

    def test_runtime_error_exit_1(self, tmp_path, capsys):
        args = ["simulate", "--case", "c1", "--reps", "1", "--out", str(tmp_path),
                "--set", "ep.prior_precision=1e6", "--set", "ep.lr=1.0"] + FAST
        assert cli.main(args) == 1
        assert "client" in capsys.readouterr().err


class TestDump:
    def test_case3_sizes_and_header(self, tmp_path):
        assert cli.main(["dump", "--case", "c3", "--seed", "1", "--out", str(tmp_path)]) == 0
        files = csvio.client_files(tmp_path)
        assert [csvio.read_client_csv(p).n for p in files] == [1000, 800, 600, 400, 200]
        assert files[0].read_text().splitlines()[0] == "x1,x2,x3,x4,x5,w,y,y0,y1"

    def test_dump_load_dump_idempotent(self, tmp_path):
        cli.main(["dump", "--case", "c4", "--seed", "2", "--out", str(tmp_path / "a")])
        for k, p in enumerate(csvio.client_files(tmp_path / "a"), 1):
            csvio.write_client_csv(csvio.read_client_csv(p), tmp_path / "b", k)
        for p in csvio.client_files(tmp_path / "a"):
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()

    def test_ehd(self, tmp_path):
        assert cli.main(["dump", "--case", "ehd", "--out", str(tmp_path)]) == 0
        header, values = csvio.read_table(tmp_path / "client_2.csv")
        assert header[-1] == synth.EHD_OUTCOME and values.shape == (105, 7)

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert cli.main(["dump", "--case", "c1", "--out", str(blocker / "sub")]) == 1


def _injected_tables(seed, effect):
    r = np.random.default_rng(seed)
    tables = []
    for _ in range(2):
        z = r.standard_normal(150)
        a = 0.6 * z + 0.8 * r.standard_normal(150)
        b = r.standard_normal(150)
        v = 0.7 * z + 0.7 * r.standard_normal(150)
        y = 2.0 * a - b + effect * (v > np.median(v)) + 0.5 * r.standard_normal(150)
        tables.append((["a", "b", "v", "y"], np.column_stack([a, b, v, y])))
    return tables


class TestAnalyze:
    @pytest.mark.parametrize("effect", [4.0, -4.0])
    def test_injected_effect_sign(self, effect):
        for seed in range(10):
            rows = pipeline.analyze(_injected_tables(seed, effect), "y", ["v"], "xfbci", _fast_settings(), seed=seed)
            assert all(np.sign(r.ate) == np.sign(effect) for r in rows), (seed, rows)

    def test_outcome_equal_to_covariate(self, rng):
        tables = []
        for _ in range(2):
            x = rng.standard_normal((60, 3))
            tables.append((["a", "b", "t", "y"], np.column_stack([x, x[:, 0]])))
        rows = pipeline.analyze(tables, "y", ["t"], "individual", _fast_settings())
        assert all(r.mse_before < 1e-12 for r in rows)

    def test_federated_fit_never_pools_rows(self):
        tables = _injected_tables(0, 2.0)
        with model.row_audit() as audit:
            pipeline.analyze(tables, "y", ["v"], "xfbci", _fast_settings())
        assert 0 < audit.max_rows <= 150
        with model.row_audit() as audit:
            pipeline.analyze(tables, "y", ["v"], "ditto", _fast_settings())
        assert audit.max_rows <= 150
        with model.row_audit() as audit:
            pipeline.analyze(tables, "y", ["v"], "central", _fast_settings())
        assert audit.max_rows == 300

    def test_federated_needs_two_clients(self):
        with pytest.raises(csvio.CsvFormatError):
            pipeline.analyze(_injected_tables(0, 1.0)[:1], "y", ["v"], "xfbci", _fast_settings())

    def test_binary_treatment_used_as_is(self, rng):
        world = synth.generate(synth.case_spec("c1", seed=0))
        tables = []
        for ds in world.clients[:2]:
            tables.append((["x1", "x2", "x3", "x4", "x5", "w", "y"], np.column_stack([ds.x, ds.w, ds.y])))
        rows = pipeline.analyze(tables, "y", ["w"], "individual", _fast_settings())
        assert [r.n_pairs for r in rows] == [int(ds.w.sum()) for ds in world.clients[:2]]

    def test_cli_end_to_end(self, tmp_path, capsys):
        cli.main(["dump", "--case", "ehd", "--out", str(tmp_path / "d")])
        files = [str(p) for p in csvio.client_files(tmp_path / "d")]
        code = cli.main(["analyze", *files, "--outcome", "line_width", "--method", "individual",
                         "--treatment", "voltage", "--out", str(tmp_path)] + FAST)
        assert code == 0
        lines = (tmp_path / "analyze_individual.csv").read_text().splitlines()
        assert lines[0] == "treatment,client,method,ate,mse_before,mse_after,n_pairs"
        assert len(lines) == 3

    def test_missing_column(self, tmp_path, capsys):
        p = tmp_path / "c.csv"
        p.write_text("a,b\n1,2\n")
        assert cli.main(["analyze", str(p), str(p), "--outcome", "y", "--out", str(tmp_path)]) == 1
        assert "'y'" in capsys.readouterr().err

    def test_constant_treatment(self, tmp_path, capsys):
        p = tmp_path / "c.csv"
        p.write_text("a,t,y\n" + "".join(f"{i},5,{i}\n" for i in range(10)))
        assert cli.main(["analyze", str(p), str(p), "--outcome", "y", "--treatment", "t", "--out", str(tmp_path)]) == 1
        assert "'t'" in capsys.readouterr().err

    def test_non_numeric_cell(self, tmp_path, capsys):
        p = tmp_path / "c.csv"
        p.write_text("a,t,y\n1,2,3\n1,x,3\n")
        assert cli.main(["analyze", str(p), str(p), "--outcome", "y", "--out", str(tmp_path)]) == 1
        assert "c.csv:3" in capsys.readouterr().err

    def test_bad_binarize_rule(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("a,t,y\n1,2,3\n")
        assert cli.main(["analyze", str(p), "--binarize", "mode", "--out", str(tmp_path)]) == 2


class TestPipeline:
    def test_methods_return_one_estimate_per_client(self):
        world = synth.generate(synth.case_spec("c4", seed=1))
        st = _fast_settings("c4")
        for m in pipeline.METHODS:
            thetas = pipeline.fit_parameters(m, world.clients[:3], st, seed=1)
            assert len(thetas) == 3 and all(t.shape == (5,) for t in thetas)

    def test_central_step_is_scaled(self):
        st = _fast_settings("c1")
        assert st.central_sgld([1000] * 5).learning_rate == pytest.approx(st.ep.sgld.learning_rate / 5)
        st2 = pipeline.MethodSettings(st.ep, st.ditto, central_lr=0.3)
        assert st2.central_sgld([10, 10]).learning_rate == 0.3

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            pipeline.fit_parameters("fedprox", [], _fast_settings(), 0)

    def test_no_treated_client_is_named(self):
        ds = model.ClientDataset(np.ones((4, 1)), [0, 0, 0, 0], np.zeros(4))
        with pytest.raises(pipeline.causal.NoTreated, match="client 3"):
            pipeline.match_and_estimate(ds, np.zeros(1), client_id=3)
