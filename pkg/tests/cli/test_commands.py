"""End-to-end tests of the command-line entry point."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from cdfgnn import run
from cdfgnn.domain.errors import BarrierTimeoutError
from cdfgnn.infrastructure.metrics_store import METRICS_VERSION_LINE, read_metrics

SMALL_MODEL = ["--hidden", "8", "--lr", "0.05", "--no-wall-clock"]


def test_gen_graph_writes_three_files(generated: Path) -> None:
    """Test that the generator writes the edge, feature and label files."""
    for suffix in (".edges", ".feat", ".labels"):
        assert Path(f"{generated}{suffix}").is_file()


def test_partition_prints_stats_and_writes_plan(
    generated: Path,
    tmp_path: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    """Test the partition command on a 2x2 cluster."""
    capsys.readouterr()
    status = run(
        [
            "partition",
            "--graph", f"{generated}.edges",
            "--p", "4",
            "--hosts", "2",
            "--out", str(tmp_path / "plan"),
        ]
    )

    assert status == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["replication_factor"] >= 1.0
    assert (tmp_path / "plan" / "manifest.json").is_file()
    assert (tmp_path / "plan" / "worker_3.map").is_file()


def test_train_zero_epochs_writes_header_only(dataset_args: list[str], tmp_path: Path) -> None:
    """Test that --epochs 0 succeeds with a header-only metrics file."""
    metrics = tmp_path / "m.csv"
    status = run(["train", *dataset_args, "--epochs", "0", "--metrics-out", str(metrics)])

    assert status == 0
    lines = metrics.read_text().splitlines()
    assert lines[0] == METRICS_VERSION_LINE
    assert len(lines) == 2
    assert json.loads((tmp_path / "m.json").read_text())["epochs"] == 0


def test_single_worker_without_cache_sends_nothing(
    dataset_args: list[str],
    tmp_path: Path,
) -> None:
    """Test that --p 1 --cache off reports zero vertex messages and bytes."""
    metrics = tmp_path / "m.csv"
    status = run(
        [
            "train", *dataset_args, *SMALL_MODEL,
            "--p", "1",
            "--cache", "off",
            "--epochs", "3",
            "--metrics-out", str(metrics),
        ]
    )

    assert status == 0
    table = read_metrics(metrics)
    assert table.column("vertex_messages") == [0.0, 0.0, 0.0]
    assert table.column("fwd_sends_l1") == [0.0, 0.0, 0.0]
    assert table.column("fwd_frac_l1") == [0.0, 0.0, 0.0]
    assert table.column("wall_s") == [0.0, 0.0, 0.0]


def test_train_on_saved_plan_with_compare_exact(
    generated: Path,
    dataset_args: list[str],
    tmp_path: Path,
) -> None:
    """Test cache + quantization on a saved plan against the exact baseline."""
    plan = tmp_path / "plan"
    assert run(["partition", "--graph", f"{generated}.edges", "--p", "4", "--out", str(plan)]) == 0

    metrics = tmp_path / "run" / "m.csv"
    status = run(
        [
            "train", *dataset_args, *SMALL_MODEL,
            "--plan", str(plan),
            "--cache", "on",
            "--quant", "on",
            "--bits", "8",
            "--epochs", "4",
            "--metrics-out", str(metrics),
            "--compare-exact",
        ]
    )

    assert status == 0
    summary = json.loads((tmp_path / "run" / "m.json").read_text())
    assert summary["exact_total_vertex_messages"] > summary["total_vertex_messages"]
    assert summary["byte_reduction"] > 0
    assert summary["partition"]["replication_factor"] >= 1.0
    assert len(read_metrics(tmp_path / "run" / "m.exact.csv").rows) == 4


def test_config_file_env_and_flags(
    dataset_args: list[str],
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    """Test that flags beat the environment, which beats the config file."""
    config = tmp_path / "run.conf"
    config.write_text("train.epochs = 1\ntrain.hidden = 8\npartition.hosts = 1\n")
    base = ["--config", str(config), "train", *dataset_args]

    assert run([*base, "--metrics-out", str(tmp_path / "a.csv")]) == 0
    assert len(read_metrics(tmp_path / "a.csv").rows) == 1

    monkeypatch.setenv("CDFGNN_TRAIN__EPOCHS", "2")
    assert run([*base, "--metrics-out", str(tmp_path / "b.csv")]) == 0
    assert len(read_metrics(tmp_path / "b.csv").rows) == 2

    assert run([*base, "--epochs", "3", "--metrics-out", str(tmp_path / "c.csv")]) == 0
    assert len(read_metrics(tmp_path / "c.csv").rows) == 3


def test_paths_fall_back_to_environment(
    generated: Path,
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    """Test CDFGNN_GRAPH/FEATURES/LABELS/METRICS_OUT in place of the flags."""
    monkeypatch.setenv("CDFGNN_GRAPH", f"{generated}.edges")
    monkeypatch.setenv("CDFGNN_FEATURES", f"{generated}.feat")
    monkeypatch.setenv("CDFGNN_LABELS", f"{generated}.labels")
    monkeypatch.setenv("CDFGNN_METRICS_OUT", str(tmp_path / "env.csv"))

    assert run(["train", "--epochs", "1", "--hidden", "4"]) == 0
    assert (tmp_path / "env.csv").is_file()


def test_oracle_train(dataset_args: list[str], tmp_path: Path) -> None:
    """Test the single-device reference command."""
    metrics = tmp_path / "oracle.csv"
    status = run(["oracle-train", *dataset_args, *SMALL_MODEL[:4], "--epochs", "3",
                  "--metrics-out", str(metrics)])

    assert status == 0
    table = read_metrics(metrics)
    assert table.column("epoch") == [1.0, 2.0, 3.0]
    assert table.column("vertex_messages") == [0.0, 0.0, 0.0]


def test_compare_prints_report(
    dataset_args: list[str],
    tmp_path: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    """Test comparing a cached run against an exact one."""
    common = ["train", *dataset_args, *SMALL_MODEL, "--p", "2", "--epochs", "3"]
    assert run([*common, "--cache", "off", "--metrics-out", str(tmp_path / "a.csv")]) == 0
    assert run([*common, "--cache", "on", "--metrics-out", str(tmp_path / "b.csv")]) == 0
    capsys.readouterr()

    out = tmp_path / "report.json"
    status = run(["compare", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"), "--out", str(out)])

    assert status == 0
    report = json.loads(capsys.readouterr().out)
    assert report["common_epochs"] == 3
    assert report["message_reduction"] > 0
    assert json.loads(out.read_text()) == report


def test_ablation_table(
    dataset_args: list[str],
    tmp_path: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    """Test the four ablation variants on one plan."""
    capsys.readouterr()
    status = run(["ablation", *dataset_args, *SMALL_MODEL, "--p", "2", "--epochs", "2"])

    assert status == 0
    rows = {row["variant"]: row for row in json.loads(capsys.readouterr().out)}
    assert list(rows) == ["baseline", "cache", "quant", "cache+quant"]
    assert rows["quant"]["total_bytes"] < rows["baseline"]["total_bytes"]
    assert rows["cache"]["total_vertex_messages"] < rows["baseline"]["total_vertex_messages"]
    assert rows["cache+quant"]["total_bytes"] < rows["baseline"]["total_bytes"]


@pytest.mark.parametrize(
    "extra",
    [
        ["--cache", "maybe"],
        ["--quant", "on", "--bits", "17"],
        ["--p", "3", "--hosts", "2"],
        ["--gamma", "2"],
    ],
)
def test_usage_errors_exit_2(dataset_args: list[str], tmp_path: Path, extra: list[str]) -> None:
    """Test that bad flags and settings exit with status 2."""
    argv = ["train", *dataset_args, "--epochs", "1", "--metrics-out", str(tmp_path / "m.csv")]

    assert run([*argv, *extra]) == 2


def test_missing_required_path_and_command_exit_2(dataset_args: list[str]) -> None:
    """Test missing --metrics-out and an unknown subcommand."""
    assert run(["train", *dataset_args, "--epochs", "1"]) == 2
    assert run(["frobnicate"]) == 2
    assert run([]) == 2


def test_data_errors_exit_3(generated: Path, dataset_args: list[str], tmp_path: Path) -> None:
    """Test missing and malformed inputs and a plan for another graph."""
    metrics = ["--metrics-out", str(tmp_path / "m.csv"), "--epochs", "1"]

    missing = ["--graph", str(tmp_path / "absent.edges"), *dataset_args[2:]]
    assert run(["train", *missing, *metrics]) == 3

    broken = tmp_path / "broken.edges"
    broken.write_text("0 1\n1 x\n")
    assert run(["train", "--graph", str(broken), *dataset_args[2:], *metrics]) == 3

    other = tmp_path / "other"
    assert run(["gen-graph", "--n", "50", "--m", "2", "--out-prefix", str(other)]) == 0
    plan = tmp_path / "plan"
    assert run(["partition", "--graph", f"{other}.edges", "--p", "2", "--out", str(plan)]) == 0
    assert run(["train", *dataset_args, "--plan", str(plan), *metrics]) == 3


def test_protocol_and_internal_errors_exit_4(
    dataset_args: list[str],
    tmp_path: Path,
    mocker,
) -> None:
    """Test that runtime protocol failures and unexpected exceptions exit with 4."""
    argv = ["train", *dataset_args, "--epochs", "1", "--metrics-out", str(tmp_path / "m.csv")]

    mocker.patch(
        "cdfgnn.cli.commands.get_runtime",
        side_effect=BarrierTimeoutError("stuck", worker=1, phase="gather", epoch=1),
    )
    assert run(argv) == 4

    mocker.patch("cdfgnn.cli.commands.get_runtime", side_effect=RuntimeError("bug"))
    assert run(argv) == 4


def test_every_flag_falls_back_to_environment(
    dataset_args: list[str],
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    """Test CDFGNN_<FLAG> for a required generator flag and for training flags."""
    monkeypatch.setenv("CDFGNN_N", "40")
    assert run(["gen-graph", "--m", "2", "--out-prefix", str(tmp_path / "env")]) == 0
    # заголовок "k" и по строке на вершину
    assert len((tmp_path / "env.labels").read_text().splitlines()) == 1 + 40

    monkeypatch.setenv("CDFGNN_EPOCHS", "2")
    monkeypatch.setenv("CDFGNN_CACHE", "off")
    argv = ["train", *dataset_args, *SMALL_MODEL, "--p", "2"]
    assert run([*argv, "--metrics-out", str(tmp_path / "a.csv")]) == 0
    table = read_metrics(tmp_path / "a.csv")
    assert len(table.rows) == 2
    assert table.column("eps") == [0.0, 0.0]

    # флаг важнее переменной окружения
    assert run([*argv, "--epochs", "1", "--metrics-out", str(tmp_path / "b.csv")]) == 0
    assert len(read_metrics(tmp_path / "b.csv").rows) == 1

    monkeypatch.setenv("CDFGNN_EPOCHS", "many")
    assert run([*argv, "--metrics-out", str(tmp_path / "c.csv")]) == 2
