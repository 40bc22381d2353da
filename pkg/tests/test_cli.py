"""Command-line interface: exit-status contract, reports, bench tables."""

import os

from certbound.cli import main
from certbound.optimizer import parse_report


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return str(path)


class TestRunExitCodes:
    def test_mc_proved_exit_zero(self, tmp_path, capsys):
        rc = main(["run", "mc.prob", "--order", "1", "--control-points", "2",
                   "--max-boxes", "200",
                   "--report", str(tmp_path / "mc.report")])
        assert rc == 0
        rep = parse_report((tmp_path / "mc.report").read_text())
        assert rep.status == "proved"
        assert rep.target == -1.92
        assert rep.boxes_processed <= 200

    def test_target_above_minimum_exits_budget(self, capsys):
        # MC's true minimum is about -1.9133, so -1.90 can never be proved
        rc = main(["run", "mc.prob", "--order", "1", "--control-points", "2",
                   "--target", "-1.90", "--max-boxes", "12"])
        assert rc == 4
        assert "budget" in capsys.readouterr().err

    def test_missing_file_exits_parse(self, capsys):
        rc = main(["run", "no-such-problem.prob"])
        assert rc == 2
        assert "parse" in capsys.readouterr().err

    def test_syntax_error_exits_parse(self, tmp_path, capsys):
        bad = _write(tmp_path / "bad.prob",
                     "vars: x1 in [0,1]\nobjective: sin(x1\n")
        rc = main(["run", bad])
        assert rc == 2
        assert "parse" in capsys.readouterr().err

    def test_domain_error_exits_domain(self, tmp_path, capsys):
        prob = _write(tmp_path / "dom.prob",
                      "vars: x1 in [-1,1]\nobjective: log(x1)\n")
        rc = main(["run", prob, "--max-boxes", "4"])
        assert rc == 3
        assert "domain" in capsys.readouterr().err

    def test_bad_flag_value_exits_parse(self, capsys):
        rc = main(["run", "mc.prob", "--max-boxes", "0"])
        assert rc == 2
        assert "parse" in capsys.readouterr().err

    def test_no_target_completed_exit_zero(self, tmp_path, capsys):
        prob = _write(tmp_path / "p.prob",
                      "vars: x1 in [0,1]\nobjective: x1^2\n")
        rc = main(["run", prob, "--order", "1", "--max-boxes", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        assert parse_report(out).status == "completed"


class TestRunArtifacts:
    def test_report_to_stdout_by_default(self, capsys):
        rc = main(["run", "mc.prob", "--order", "1", "--control-points", "2",
                   "--max-boxes", "200"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.startswith("certbound report v1")
        assert parse_report(out).status == "proved"

    def test_seed_reproduces_identical_reports(self, tmp_path, capsys):
        argv = ["run", "mc.prob", "--order", "1", "--control-points", "2",
                "--max-boxes", "20", "--seed", "7"]
        assert main(argv + ["--report", str(tmp_path / "a")]) in (0, 4)
        assert main(argv + ["--report", str(tmp_path / "b")]) in (0, 4)
        strip = lambda p: [l for l in p.read_text().splitlines()
                           if not l.startswith("#")]
        assert strip(tmp_path / "a") == strip(tmp_path / "b")

    def test_certified_run_writes_certificates(self, tmp_path, capsys):
        prob = _write(tmp_path / "q.prob",
                      "vars: x1 in [-1,1], x2 in [-1,1]\n"
                      "objective: x1^2 + x2^2 + x1*x2\n"
                      "goal: prove >= -0.5\n")
        cert_dir = str(tmp_path / "certs")
        rc = main(["run", prob, "--order", "1", "--mode", "certified",
                   "--cert-dir", cert_dir, "--max-boxes", "8"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "certificates: Valid" in out
        assert any(name.endswith(".cert") for name in os.listdir(cert_dir))


class TestBench:
    def test_suite_table_and_mode_ordering(self, tmp_path, capsys):
        suite = _write(tmp_path / "s.suite",
                       "MC mc.prob --order 1 --control-points 2 "
                       "--max-boxes 1200\n")
        rc = main(["bench", suite])
        out = capsys.readouterr().out
        assert rc == 0
        lines = [l for l in out.splitlines() if l.startswith("MC")]
        assert len(lines) == 2  # numeric + ia_sos rows
        by_mode = {l.split()[1]: l.split() for l in lines}
        assert by_mode["numeric"][7] == "proved"
        assert by_mode["ia_sos"][7] == "proved"
        # template mode needs strictly fewer boxes than the baseline
        assert int(by_mode["numeric"][5]) < int(by_mode["ia_sos"][5])
        # both rows report the root lifting count
        assert int(by_mode["numeric"][4]) >= 0
        assert int(by_mode["ia_sos"][4]) >= 0

    def test_empty_suite_exit_zero(self, tmp_path, capsys):
        suite = _write(tmp_path / "empty.suite", "# nothing here\n\n")
        rc = main(["bench", suite])
        assert rc == 0
        out = capsys.readouterr().out
        assert not [l for l in out.splitlines()[2:] if l.strip()]

    def test_failing_row_recorded_and_nonzero_exit(self, tmp_path, capsys):
        suite = _write(tmp_path / "f.suite",
                       "MC mc.prob --order 1 --control-points 2 "
                       "--target -1.90 --max-boxes 8\n")
        rc = main(["bench", suite])
        assert rc == 4
        out = capsys.readouterr().out
        assert "failure" in out

    def test_missing_suite_exits_parse(self, capsys):
        rc = main(["bench", "no-such.suite"])
        assert rc == 2
        assert "parse" in capsys.readouterr().err
