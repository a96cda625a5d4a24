import csv
import io
import json
import math
import subprocess
import sys

import pytest

from sixstate import cli
from sixstate.collective import BrussReport
from sixstate.protocol import InvariantViolation


def run(argv):
    out = io.StringIO()
    code = cli.main(argv, out=out)
    return code, out.getvalue()


def run_json(argv):
    code, text = run(argv)
    assert code == 0, text
    return json.loads(text)


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv("QKD_SEED", raising=False)
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)


class TestCurves:
    def test_schema_and_endpoints(self, tmp_path):
        path = tmp_path / "curves.csv"
        code, _ = run(["curves", "--steps", "101", "--out", str(path)])
        assert code == 0
        lines = path.read_text().splitlines()
        comments = [ln for ln in lines if ln.startswith("#")]
        assert len(comments) == 5
        rows = list(csv.DictReader(ln for ln in lines if not ln.startswith("#")))
        assert list(rows[0]) == ["d", "pe_six", "pe_bb84", "ie_six", "ie_bb84", "qab"]
        assert len(rows) == 101
        first, last = rows[0], rows[-1]
        assert float(first["d"]) == 0 and float(first["pe_six"]) == 0.5 and float(first["ie_six"]) == 0
        assert float(last["d"]) == 0.5 and float(last["pe_six"]) == 1 and float(last["ie_six"]) == 1
        ds = [float(r["d"]) for r in rows]
        assert ds == sorted(ds)
        for r in rows:
            assert float(r["pe_six"]) <= float(r["pe_bb84"])
            assert float(r["ie_six"]) <= float(r["ie_bb84"])
            assert 0 <= float(r["ie_six"]) <= 1
            assert float(r["qab"]) == pytest.approx(1 - float(r["d"]))

    def test_twelve_digits(self):
        _, text = run(["curves", "--steps", "7"])
        for line in text.splitlines()[6:]:
            for field in line.split(","):
                assert field == f"{float(field):.12g}"

    def test_manifest_lines(self):
        _, text = run(["curves", "--steps", "3", "--seed", "4"])
        head = [ln for ln in text.splitlines() if ln.startswith("#")]
        assert head[0] == '# command: "curves"'
        assert "# seed: 4" in head
        assert '# timestamp: "1970-01-01T00:00:00Z"' in head

    @pytest.mark.parametrize(
        "argv",
        [["--d-min", "0.3", "--d-max", "0.2"], ["--d-max", "0.6"], ["--d-min", "-0.1"], ["--steps", "1"]],
    )
    def test_bad_range(self, argv):
        assert run(["curves", *argv])[0] == 1


class TestIR:
    def test_solve(self):
        data = run_json(["ir", "solve"])
        sols = data["solutions"]
        assert len(sols) == 4
        opt = [s for s in sols if s["optimal"]]
        assert len(opt) == 2
        for s in opt:
            assert s["p"] == pytest.approx((3 + math.sqrt(3)) / 6, abs=1e-12)
            assert s["q"] == pytest.approx(2 / 3, abs=1e-12)
        assert opt[0]["alpha"] == pytest.approx(math.pi / 4, abs=1e-11)
        assert opt[0]["beta"] == pytest.approx(0.9553, abs=1e-4)
        for s in sols:
            if not s["optimal"]:
                assert s["p"] == pytest.approx(0.2113, abs=1e-4)
        assert data["manifest"]["command"] == "ir solve"

    def test_scan(self, tmp_path):
        path = tmp_path / "scan.csv"
        data = run_json(["ir", "scan", "--alpha-steps", "181", "--beta-steps", "181", "--out", str(path)])
        assert len(data["clusters"]) == 4
        assert data["max_min_p"] <= (3 + math.sqrt(3)) / 6
        with open(path) as fh:
            assert sum(1 for _ in fh) == 181 * 181 + 1

    def test_scan_degenerate(self):
        assert run_json(["ir", "scan", "--alpha-steps", "2", "--beta-steps", "2"])["cells"] == 4

    def test_scan_bad_steps(self):
        assert run(["ir", "scan", "--alpha-steps", "1"])[0] == 1


class TestSimulate:
    def test_no_attack(self):
        data = run_json(["simulate", "--rounds", "100000", "--seed", "7"])
        assert data["qber"] == 0
        assert data["sift_rate"] == pytest.approx(1 / 3, abs=4 * data["sift_rate_se"])
        assert data["manifest"]["params"]["rounds"] == 100000

    def test_collective(self):
        data = run_json(["simulate", "--attack", "collective", "--disturbance", "0.1666667",
                         "--rounds", "300000", "--seed", "1"])
        assert data["eve_accuracy"] == pytest.approx(0.8333, abs=4 * data["eve_accuracy_se"] + 1e-4)

    def test_bb84(self):
        data = run_json(["simulate", "--scheme", "bb84", "--rounds", "100000"])
        assert data["sift_rate"] == pytest.approx(0.5, abs=4 * data["sift_rate_se"])
        assert set(data["per_basis"]) == {"Z", "X"}

    def test_intercept_resend(self):
        data = run_json(["simulate", "--attack", "intercept-resend", "--alpha", "0.7853981633974483",
                         "--beta", "0.9553166181245093", "--rounds", "200000"])
        assert data["q_ab"] == pytest.approx(2 / 3, abs=4 * data["q_ab_se"])

    @pytest.mark.parametrize(
        "argv",
        [
            ["--attack", "intercept-resend", "--alpha", "1.0"],
            ["--attack", "collective"],
            ["--attack", "collective", "--disturbance", "0.6"],
            ["--attack", "collective", "--disturbance", "0.1", "--theta", "0.2"],
            ["--attack", "bogus"],
            ["--scheme", "b92"],
            ["--rounds", "0"],
            ["--workers", "0"],
            ["--rounds", "ten"],
            ["--seed", "-1"],
        ],
    )
    def test_usage_errors(self, argv):
        assert run(["simulate", *argv])[0] == 1

    def test_invariant_violation_exit(self, monkeypatch):
        def broken(*args, **kwargs):
            raise InvariantViolation("sifted > rounds")

        monkeypatch.setattr(cli, "run_session", broken)
        assert run(["simulate", "--rounds", "10"])[0] == 2


class TestVerify:
    def test_pi_over_three(self):
        code, text = run(["verify", "--theta", "1.0471975"])
        assert code == 0
        data = json.loads(text)
        assert data["ok"] and data["max_residual"] < 1e-12
        assert data["fidelity"] == pytest.approx(2 / 3, abs=1e-7)

    def test_zero(self):
        assert run(["verify", "--theta", "0"])[0] == 0

    def test_disturbance(self):
        assert run(["verify", "--disturbance", "0.25"])[0] == 0

    @pytest.mark.parametrize("argv", [["--disturbance", "0.6"], [], ["--theta", "2.0"],
                                      ["--theta", "0.1", "--disturbance", "0.1"]])
    def test_usage_errors(self, argv):
        assert run(["verify", *argv])[0] == 1

    def test_violation_exit(self, monkeypatch):
        monkeypatch.setattr(cli, "verify_bruss",
                            lambda p: BrussReport(p, {"unitarity": 1e-3, "re_ac": 0.0}))
        code, text = run(["verify", "--theta", "0.5"])
        assert code == 2
        assert json.loads(text)["ok"] is False


class TestE91:
    def test_none(self):
        data = run_json(["e91", "--rounds", "50000"])
        assert data["analytic"]["s"] == pytest.approx(3, abs=1e-12)
        assert data["simulated"]["s"] == pytest.approx(3, abs=1e-12)
        assert data["analytic"]["exceeds_hidden_variable_bound"] is True

    def test_ir_bob(self):
        data = run_json(["e91", "--attack", "ir-bob", "--rounds", "200000"])
        assert data["analytic"]["mode"] == "exact"
        assert data["analytic"]["s"] == 1
        sim = data["simulated"]
        assert sim["s"] == pytest.approx(1, abs=4 * sim["s_error"])
        assert sim["exceeds_hidden_variable_bound"] is False

    def test_ir_both(self):
        data = run_json(["e91", "--attack", "ir-both", "--rounds", "200000"])
        assert data["analytic"]["mode"] == "mc"
        assert data["expected_sbar"] == pytest.approx(1 / 3, abs=1e-11)
        assert data["simulated"]["s"] <= 1

    def test_ir_both_dirac(self):
        data = run_json(["e91", "--attack", "ir-both", "--distribution", "dirac-60deg", "--rounds", "1000"])
        assert data["analytic"]["s"] == pytest.approx(0.25, abs=1e-12)

    def test_collective(self):
        data = run_json(["e91", "--attack", "collective", "--disturbance", "0.1", "--rounds", "50000"])
        assert data["analytic"]["s"] == pytest.approx(2.4, abs=1e-12)
        assert data["analytic"]["exceeds_hidden_variable_bound"] is True

    @pytest.mark.parametrize(
        "argv",
        [
            ["--attack", "collective"],
            ["--attack", "collective", "--disturbance", "0.9"],
            ["--attack", "ir-both", "--distribution", "one-sided-uniform"],
            ["--attack", "ir-bob", "--distribution", "product-uniform"],
            ["--attack", "ir-bob", "--distribution", "nope"],
            ["--attack", "everything"],
        ],
    )
    def test_usage_errors(self, argv):
        assert run(["e91", *argv])[0] == 1


class TestSeedAndManifest:
    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("QKD_SEED", "12")
        assert run_json(["ir", "solve"])["manifest"]["seed"] == 12

    def test_flag_wins(self, monkeypatch):
        monkeypatch.setenv("QKD_SEED", "12")
        assert run_json(["ir", "solve", "--seed", "3"])["manifest"]["seed"] == 3

    def test_bad_env(self, monkeypatch):
        monkeypatch.setenv("QKD_SEED", "abc")
        assert run(["ir", "solve"])[0] == 1

    def test_env_seed_drives_simulation(self, monkeypatch):
        monkeypatch.setenv("QKD_SEED", "21")
        a = run(["simulate", "--rounds", "20000"])[1]
        b = run(["simulate", "--rounds", "20000", "--seed", "21"])[1]
        assert a == b

    def test_source_date_epoch(self, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "86400")
        assert run_json(["ir", "solve"])["manifest"]["timestamp"] == "1970-01-02T00:00:00Z"

    def test_manifest_fields(self):
        m = run_json(["verify", "--theta", "0.3"])["manifest"]
        assert set(m) == {"command", "params", "seed", "version", "timestamp"}
        assert m["params"] == {"theta": 0.3}


class TestReproducibility:
    @pytest.mark.parametrize(
        "argv",
        [
            ["curves", "--steps", "51"],
            ["ir", "solve"],
            ["ir", "scan", "--alpha-steps", "91", "--beta-steps", "91"],
            ["verify", "--disturbance", "0.3"],
            ["simulate", "--attack", "collective", "--disturbance", "0.2", "--rounds", "150000", "--seed", "5"],
            ["e91", "--attack", "ir-both", "--rounds", "150000", "--seed", "5"],
        ],
    )
    def test_rerun_identical(self, argv):
        assert run(argv)[1] == run(argv)[1]

    @pytest.mark.parametrize(
        "argv",
        [
            ["simulate", "--attack", "intercept-resend", "--alpha", "1", "--beta", "2", "--rounds", "150000"],
            ["e91", "--attack", "ir-bob", "--rounds", "150000"],
            ["e91", "--attack", "collective", "--disturbance", "0.2", "--rounds", "150000"],
        ],
    )
    def test_independent_of_workers(self, argv):
        assert run(argv)[1] == run([*argv, "--workers", "3"])[1]


@pytest.mark.parametrize("argv", [["frobnicate"], [], ["ir"], ["ir", "solve", "--bogus"]])
def test_usage_exit_code_is_one(argv):
    assert run(argv)[0] == 1


def test_help_exits_zero():
    assert run(["--help"])[0] == 0


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sixstate", "ir", "solve"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert len(json.loads(proc.stdout)["solutions"]) == 4
    proc = subprocess.run([sys.executable, "-m", "sixstate", "verify", "--disturbance", "0.6"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
