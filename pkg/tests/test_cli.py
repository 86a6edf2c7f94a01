import os
from pathlib import Path

import pytest

from flowbound.cli import CSV_HEADER, main
from flowbound.config import ExperimentConfig, parse_flat_file
from flowbound.graphs import load_edge_list
from flowbound.policy import SetPolicy


def write_config(path: Path, out_dir: Path, **overrides) -> Path:
    entries = {
        "task.kind": "er",
        "task.n": "10",
        "task.edge_prob": "0.3",
        "task.cardinality": "3",
        "train.variants": "classical,subo",
        "train.query_budget": "60",
        "train.batch_size": "8",
        "train.lr_policy": "0.001",
        "train.lr_log_z": "0.1",
        "train.optimizer": "adam",
        "train.offline_steps": "2",
        "train.embedding_dim": "8",
        "train.hidden_dim": "8",
        "run.seeds": "0,1,2",
        "run.metrics_interval": "2",
        "run.out": str(out_dir),
    }
    entries.update(overrides)
    path.write_text("".join(f"{k}={v}\n" for k, v in entries.items()), encoding="utf-8")
    return path


class TestConfigParsing:
    def test_flat_parse(self, tmp_path):
        cfg = tmp_path / "a.cfg"
        cfg.write_text("# comment\nx.y=3\nz = hello\n")
        assert parse_flat_file(cfg) == {"x.y": "3", "z": "hello"}

    def test_bad_line_rejected(self, tmp_path):
        cfg = tmp_path / "a.cfg"
        cfg.write_text("not a pair\n")
        with pytest.raises(ValueError):
            parse_flat_file(cfg)

    def test_missing_edge_list_rejected(self, tmp_path):
        cfg = write_config(
            tmp_path / "a.cfg", tmp_path / "out", **{"task.kind": "edge_list", "task.path": "nope"}
        )
        with pytest.raises(ValueError):
            ExperimentConfig.from_file(cfg)


class TestTrainCommand:
    def test_runs_and_manifest(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "exp.cfg", out)
        assert main(["train", "--config", str(cfg)]) == 0
        csvs = sorted(p.name for p in out.glob("*.csv"))
        assert len(csvs) == 6  # 2 variants x 3 seeds
        manifest = (out / "manifest.txt").read_text()
        assert "train.query_budget=60" in manifest
        assert "input.config_sha256=" in manifest
        header = (out / csvs[0]).read_text().splitlines()[0]
        assert header == CSV_HEADER

    def test_byte_identical_rerun(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cfg = write_config(tmp_path / "exp.cfg", out_a)
        assert main(["train", "--config", str(cfg)]) == 0
        assert main(["train", "--config", str(cfg), "--out", str(out_b)]) == 0
        for name in ("classical-seed0.csv", "subo-seed2.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_overrides_take_precedence(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "exp.cfg", out)
        code = main(
            [
                "train",
                "--config",
                str(cfg),
                "--query-budget",
                "30",
                "--seed",
                "5",
                "--variant",
                "classical",
            ]
        )
        assert code == 0
        assert sorted(p.name for p in out.glob("*.csv")) == ["classical-seed5.csv"]
        manifest = (out / "manifest.txt").read_text()
        assert "train.query_budget=30" in manifest
        assert "run.seeds=5" in manifest

    def test_invalid_config_exits_nonzero(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("task.kind=warp\ntask.cardinality=3\n")
        assert main(["train", "--config", str(cfg)]) != 0

    def test_phase_marker_present(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "exp.cfg", out, **{"run.seeds": "0"})
        assert main(["train", "--config", str(cfg)]) == 0
        rows = (out / "classical-seed0.csv").read_text().splitlines()[1:]
        phases = [row.split(",")[1] for row in rows]
        assert "online" in phases and "offline" in phases

    def test_parallel_runs_match_serial(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cfg = write_config(tmp_path / "exp.cfg", out_a, **{"run.seeds": "0,1"})
        assert main(["train", "--config", str(cfg)]) == 0
        os.environ["SUBO_THREADS"] = "2"
        try:
            assert main(["train", "--config", str(cfg), "--out", str(out_b)]) == 0
        finally:
            del os.environ["SUBO_THREADS"]
        for name in ("classical-seed0.csv", "subo-seed1.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


class TestVerifyCounts:
    def test_all_ok(self, capsys):
        assert main(["verify-counts", "--n-max", "6", "--c-max", "3"]) == 0
        out = capsys.readouterr().out
        rows = [line for line in out.splitlines()[1:] if line]
        assert all(line.endswith(",OK") for line in rows)
        # the constraint filter keeps only C=1 at N=3
        assert any(line.startswith("3,1,") for line in rows)
        assert not any(line.startswith("3,2,") for line in rows)

    def test_discrepancy_column_present(self, capsys):
        assert main(["verify-counts", "--n-max", "4", "--c-max", "2"]) == 0
        out = capsys.readouterr().out
        header = out.splitlines()[0]
        assert "phi_alternate" in header
        row42 = next(line for line in out.splitlines() if line.startswith("4,2,"))
        fields = dict(zip(header.split(","), row42.split(",")))
        assert fields["phi_closed"] == fields["phi_oracle"] == "0"
        assert fields["phi_alternate"] == "26"


class TestMcCommand:
    def test_zero_row(self, tmp_path, capsys):
        out = tmp_path / "mc.csv"
        code = main(
            ["mc", "--n", "4", "--c", "2", "--m", "0", "--repetitions", "100", "--out", str(out)]
        )
        assert code == 0
        rows = out.read_text().splitlines()
        values = rows[1].split(",")
        assert values[0] == "0"
        assert all(float(v) == 0.0 for v in values[1:])

    def test_closed_form_only_mode(self, tmp_path):
        out = tmp_path / "mc.csv"
        code = main(
            ["mc", "--n", "20", "--c", "8", "--m", "2,5", "--repetitions", "0", "--out", str(out)]
        )
        assert code == 0
        rows = out.read_text().splitlines()
        assert rows[1].split(",")[2] == ""  # no MC columns without repetitions

    def test_cap_refusal(self):
        assert main(["mc", "--n", "20", "--c", "8", "--m", "5", "--repetitions", "10"]) == 2


class TestGenGraph:
    def test_complete_graph_line_count(self, tmp_path):
        out = tmp_path / "k10.txt"
        code = main(
            ["gen-graph", "--kind", "er", "--n", "10", "--edge-prob", "1.0", "--seed", "0", "--out", str(out)]
        )
        assert code == 0
        assert len(out.read_text().splitlines()) == 45

    def test_round_trip_and_determinism(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for path in (a, b):
            main(["gen-graph", "--kind", "ba", "--n", "30", "--attach-count", "3", "--seed", "7", "--out", str(path)])
        assert a.read_bytes() == b.read_bytes()
        g = load_edge_list(a)
        assert g.num_vertices == 30
        assert g.num_edges == 3 + 3 * 27


class TestEvalCommand:
    def test_recomputes_metrics_from_checkpoint(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "exp.cfg", out, **{"run.seeds": "0", "train.variants": "subo"})
        assert main(["train", "--config", str(cfg)]) == 0
        checkpoint = out / "subo-seed0.npz"
        assert checkpoint.exists()
        assert SetPolicy.load(checkpoint).num_elements == 10
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(checkpoint), "--config", str(cfg), "--seed", "0"]) == 0
        text = capsys.readouterr().out
        assert "fcs=" in text and "exact_tv=" in text

    def test_mismatched_checkpoint_rejected(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "exp.cfg", out, **{"run.seeds": "0", "train.variants": "subo"})
        main(["train", "--config", str(cfg)])
        bigger = write_config(tmp_path / "exp2.cfg", out, **{"task.n": "12", "run.seeds": "0"})
        assert main(["eval", "--checkpoint", str(out / "subo-seed0.npz"), "--config", str(bigger)]) == 2
