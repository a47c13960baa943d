"""CLI contract: run/report subcommands, override flags, exit codes."""

import json

import pytest

from hetbench.cli import main

TINY = """
scheme = fedavg, local
partition = iid
seed = 0, 1
num_clients = 3
rounds = 2
local_epochs = 1
batch_size = 16
hidden = none
data.classes = 3
data.dim = 4
data.per_class = 30
"""


@pytest.fixture
def tiny_cfg(tmp_path, monkeypatch):
    monkeypatch.setenv("HETBENCH_THREADS", "1")
    path = tmp_path / "exp.cfg"
    path.write_text(TINY + f"out = {tmp_path / 'out'}\n", encoding="utf-8")
    return path


class TestRun:
    def test_full_sweep_exits_zero_and_writes_cells(self, tiny_cfg, tmp_path, capsys):
        assert main(["run", "--config", str(tiny_cfg)]) == 0
        printed = capsys.readouterr().out.splitlines()
        assert len(printed) == 2
        for name in ("fedavg_iid", "local_iid"):
            cell = tmp_path / "out" / name
            assert (cell / "results.csv").is_file()
            assert (cell / "summary.json").is_file()
            assert (cell / "efficiency.csv").is_file()

    def test_flags_narrow_the_sweep(self, tiny_cfg, tmp_path, capsys):
        out = tmp_path / "narrow"
        code = main([
            "run", "--config", str(tiny_cfg),
            "--scheme", "local", "--partition", "iid", "--seed", "1", "--out", str(out),
        ])
        assert code == 0
        cells = sorted(p.name for p in out.iterdir())
        assert cells == ["local_iid"]
        summary = json.loads((out / "local_iid" / "summary.json").read_text())
        assert summary["seeds"] == [1]
        capsys.readouterr()

    def test_bad_config_exits_two(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("rounds = -1\n", encoding="utf-8")
        assert main(["run", "--config", str(path)]) == 2
        assert "line 1" in capsys.readouterr().err

    def test_missing_config_exits_two(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "absent.cfg")]) == 2
        assert "cannot read config" in capsys.readouterr().err

    def test_bad_override_exits_two(self, tiny_cfg, capsys):
        assert main(["run", "--config", str(tiny_cfg), "--scheme", "mystery"]) == 2
        assert "unknown scheme" in capsys.readouterr().err

    def test_runtime_failure_exits_three(self, tmp_path, capsys):
        # 4 total samples cannot be split across 5 clients
        path = tmp_path / "thin.cfg"
        path.write_text(
            "num_clients = 5\ndata.classes = 2\ndata.per_class = 2\n"
            f"out = {tmp_path / 'out'}\n",
            encoding="utf-8",
        )
        assert main(["run", "--config", str(path)]) == 3
        assert "error:" in capsys.readouterr().err


class TestReport:
    def test_report_over_finished_run(self, tiny_cfg, tmp_path, capsys):
        main(["run", "--config", str(tiny_cfg)])
        capsys.readouterr()
        assert main(["report", "--in", str(tmp_path / "out")]) == 0
        text = capsys.readouterr().out
        assert "| partition | fedavg | local |" in text
        assert "| iid |" in text
        assert "best count" in text

    def test_empty_directory_exits_two(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", "--in", str(empty)]) == 2
        assert "at least two" in capsys.readouterr().err

    def test_missing_directory_exits_two(self, tmp_path, capsys):
        assert main(["report", "--in", str(tmp_path / "nope")]) == 2
        assert "not a directory" in capsys.readouterr().err


class TestParser:
    def test_run_requires_config(self, capsys):
        with pytest.raises(SystemExit):
            main(["run"])
        capsys.readouterr()

    def test_report_requires_inputs(self, capsys):
        with pytest.raises(SystemExit):
            main(["report"])
        capsys.readouterr()

    def test_unknown_command_rejected(self, capsys):
        with pytest.raises(SystemExit):
            main(["replay"])
        capsys.readouterr()
