import pytest

from fedcausal import defaults
from fedcausal.ep_engine import CovMode, Estimator


class TestTables:
    def test_case1(self):
        ep, ditto = defaults.case_defaults("c1")
        assert (ep.rounds, ep.sgld.learning_rate, ep.sgld.steps, ep.sgld.burn_in, ep.sgld.batch_fraction, ep.alpha) == (
            20, 0.05, 700, 100, 0.9, 1e-20)
        assert (ditto.rounds, ditto.local_lr, ditto.global_lr, ditto.local_steps, ditto.global_steps) == (
            20, 0.005, 0.005, 500, 500)

    @pytest.mark.parametrize("case,row", [
        ("c2", (30, 0.001, 700, 100, 0.9, 1e-15)),
        ("c4", (30, 0.002, 700, 100, 0.8, 1e-20)),
        ("c6", (40, 0.001, 600, 100, 0.8, 1e-20)),
        ("extreme", (40, 0.002, 700, 100, 0.8, 1e-20)),
    ])
    def test_federated_rows(self, case, row):
        ep, _ = defaults.case_defaults(case)
        assert (ep.rounds, ep.sgld.learning_rate, ep.sgld.steps, ep.sgld.burn_in, ep.sgld.batch_fraction, ep.alpha) == row

    @pytest.mark.parametrize("case,row", [("c3", (30, 0.002, 0.001, 400, 400)), ("c4", (40, 0.01, 0.02, 400, 400))])
    def test_ditto_rows(self, case, row):
        _, d = defaults.case_defaults(case)
        assert (d.rounds, d.local_lr, d.global_lr, d.local_steps, d.global_steps) == row

    def test_every_case_has_defaults(self):
        from fedcausal.synth import CASE_IDS
        for cid in CASE_IDS:
            defaults.case_defaults(cid)


class TestParsing:
    def test_assignments(self):
        kv = defaults.parse_assignments(["# comment", "", "ep.lr = 0.01  # inline", "ditto.lambda_prox=2"])
        assert kv == {"ep.lr": "0.01", "ditto.lambda_prox": "2"}

    def test_build_applies_overrides(self):
        ep, ditto, extra = defaults.build("c1", {
            "ep.lr": "0.01", "ep.rounds": "5", "ep.cov_mode": "identity", "ep.estimator": "site",
            "ep.damping": "auto", "ep.warm_start": "no", "ditto.lambda_prox": "2", "central.lr": "0.001",
        })
        assert ep.sgld.learning_rate == 0.01 and ep.rounds == 5 and ep.sgld.steps == 700
        assert ep.cov_mode is CovMode.SCALED_IDENTITY_ALPHA and ep.estimator is Estimator.SITE
        assert ep.damping is None and not ep.warm_start
        assert ditto.lambda_prox == 2.0 and extra == {"lr": 0.001}

    @pytest.mark.parametrize("line", ["ep.lr", "nope=1"])
    def test_bad_lines(self, line):
        with pytest.raises(defaults.ConfigError, match="<overrides>:1"):
            defaults.parse_assignments([line])

    @pytest.mark.parametrize("kv", [{"ep.lr": "x"}, {"ep.burn_in": "800"}, {"ep.cov_mode": "diag"}])
    def test_bad_values(self, kv):
        with pytest.raises(defaults.ConfigError):
            defaults.build("c1", kv)

    def test_file(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("ep.steps=50\nep.burn_in=10\n")
        assert defaults.read_config_file(p) == {"ep.steps": "50", "ep.burn_in": "10"}
        with pytest.raises(defaults.ConfigError):
            defaults.read_config_file(tmp_path / "missing.cfg")
