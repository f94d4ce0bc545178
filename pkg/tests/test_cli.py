import json
from datetime import date

import pytest

from wardflow.serve.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestGenDataAndIngest:
    def test_gen_and_ingest_round_trip(self, tmp_path, capsys):
        code, out, _ = run_cli(
            capsys,
            "gen-data", "--root", str(tmp_path / "x"), "--seed", "3",
            "--hospitals", "HG", "--start", "2023-02-06", "--end", "2023-03-10",
        )
        assert code == 0
        body = json.loads(out)
        assert body["hospitals"] == ["HG"]

        code, out, _ = run_cli(
            capsys,
            "ingest", "--root", str(tmp_path / "x"), "--hospital", "HG",
            "--date", "2023-02-20",
        )
        assert code == 0
        body = json.loads(out)
        assert body["quarantined"] == {}
        assert set(body["row_counts"]) == {str(i) for i in range(1, 11)}

    def test_unknown_hospital_fails_with_json_error(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "gen-data", "--root", str(tmp_path), "--hospitals", "ZZ"
        )
        assert code == 1
        assert "unknown hospitals" in json.loads(err)["detail"]


class TestTrainRunDailyEvaluate:
    def test_full_cli_flow_on_no_icu_hospital(self, small_corpus, tmp_path, capsys):
        root = str(small_corpus["root"])
        store = str(tmp_path / "store.db")
        artifacts = str(tmp_path / "artifacts")
        code, out, _ = run_cli(
            capsys, "train", "--root", root, "--hospital", "HG",
            "--store", store, "--artifacts", artifacts,
        )
        assert code == 0
        body = json.loads(out)
        trained = {r["task"] for r in body["trained"]}
        assert {"mortality", "disposition", "discharge_24", "discharge_48"} <= trained
        assert "enter_icu_24" in body["skipped_tasks"]
        assert "no ICU" in body["notice"]

        code, out, _ = run_cli(
            capsys, "run-daily", "--root", root, "--hospital", "HG",
            "--date", "2023-03-01", "--store", store, "--artifacts", artifacts,
        )
        assert code == 0
        assert json.loads(out)["records_written"] > 0

        code, out, _ = run_cli(
            capsys, "evaluate", "--root", root, "--hospital", "HG",
            "--store", store, "--artifacts", artifacts, "--out", str(tmp_path / "reports"),
        )
        assert code == 0
        body = json.loads(out)
        assert "mortality" in body["auc"]
        assert any(f.endswith("HG_auc_table.csv") for f in body["files"])
        assert any(f.endswith("HG_calibration_curves.csv") for f in body["files"])

    def test_run_daily_failure_exits_nonzero(self, small_corpus, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "run-daily", "--root", str(small_corpus["root"]), "--hospital", "HG",
            "--date", "2023-03-01", "--store", str(tmp_path / "empty.db"),
            "--artifacts", str(tmp_path / "none"),
        )
        assert code == 1
        assert "detail" in json.loads(err)


class TestImpact:
    def test_default_report(self, capsys, tmp_path):
        out_path = tmp_path / "impact.json"
        code, out, _ = run_cli(capsys, "impact", "--out", str(out_path))
        assert code == 0
        assert "DiD effect (days): 0.67" in out
        body = json.loads(out_path.read_text())
        assert body["did"]["effect_days"] == pytest.approx(0.67, abs=1e-12)
        assert body["financials"]["patient_days_saved"] == pytest.approx(33114.08, abs=1e-6)

    def test_config_file(self, capsys, tmp_path):
        cfg = {
            "did": {
                "control_means": [5.0, 5.0],
                "treatment_means": [5.0, 4.5],
                "periods": [1, 2],
                "baseline_period": 0,
                "treatment_period": 1,
            },
            "financial": {
                "patients_per_year": 100,
                "avg_new_los_days": 5.0,
                "cost_per_patient_day": 1000,
                "cm_per_patient": 10000,
            },
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        code, out, _ = run_cli(capsys, "impact", "--config", str(path))
        assert code == 0
        assert "DiD effect (days): 0.50" in out


class TestArgumentErrors:
    def test_unknown_flag_rejected_with_json(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--bogus"])
        assert exc.value.code == 2
        err = capsys.readouterr().err
        assert json.loads(err)["error"] == "usage"

    def test_unknown_subcommand_rejected(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
