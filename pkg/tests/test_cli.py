"""End-to-end command tests, driving ``main`` in process."""

import hashlib
import json

import pytest

from tpivot.annotations import load_annotations, save_annotations
from tpivot.cli import (
    EXIT_BACKEND,
    EXIT_OK,
    EXIT_PARTIAL,
    EXIT_VALIDATION,
    _report_exit_code,
    main,
)

FAST = ["--canvas-px", "240", "--workers", "2"]


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_ds") / "ds"
    code = main(["synth", "--out", str(root), "--videos", "2", "--seed", "3",
                 "--tasks", "3-4", "--duration", "10-11",
                 "--frame-size", "48x36"])
    assert code == EXIT_OK
    return root


@pytest.fixture()
def truth_file(tmp_path, truth):
    path = tmp_path / "truth.json"
    save_annotations(truth, path)
    return path


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == "tpivot 0.1.0"


def test_synth_is_byte_deterministic(tmp_path):
    args = ["synth", "--videos", "2", "--seed", "9", "--tasks", "3-4",
            "--duration", "10-11", "--frame-size", "48x36"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    assert main(["synth", "--out", str(tmp_path / "c"), "--videos", "2",
                 "--seed", "10", "--tasks", "3-4", "--duration", "10-11",
                 "--frame-size", "48x36"]) == EXIT_OK
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")


def test_synth_rejects_bad_range(tmp_path):
    code = main(["synth", "--out", str(tmp_path / "x"), "--tasks", "three"])
    assert code == EXIT_VALIDATION


def test_localize_stdout_record(image_dir, truth_file, capsys):
    code = main(["localize", str(image_dir), "--annotations", str(truth_file),
                 "--backend", "oracle", "--grid", "3x3"] + FAST)
    assert code == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record["video_id"] == "clip"
    assert record["fps"] == 4.0
    assert len(record["tasks"]) == 4
    assert len(record["transitions"]) == 3
    assert record["meta"]["backend"] == "oracle"
    assert record["meta"]["run_config"]["backend"] == "oracle"
    assert record["meta"]["run_config"]["grid"] == "3x3"
    assert all(not s["failed"] for s in record["meta"]["searches"])


def test_localize_out_file(image_dir, truth_file, tmp_path, capsys):
    out = tmp_path / "record.json"
    code = main(["localize", str(image_dir), "--annotations", str(truth_file),
                 "--backend", "oracle", "--grid", "3x3", "--out", str(out)]
                + FAST)
    assert code == EXIT_OK
    assert capsys.readouterr().out == ""
    record = json.loads(out.read_text())
    assert record["video_id"] == "clip"


def test_localize_tasks_flag_overrides_annotation_labels(
        image_dir, truth_file, capsys):
    code = main(["localize", str(image_dir), "--annotations", str(truth_file),
                 "--tasks", "alpha,beta,gamma,delta",
                 "--backend", "oracle", "--grid", "3x3"] + FAST)
    assert code == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record["tasks"] == ["alpha", "beta", "gamma", "delta"]


def test_localize_requires_task_source(image_dir):
    assert main(["localize", str(image_dir),
                 "--backend", "oracle"]) == EXIT_VALIDATION


def test_localize_rejects_blank_task(image_dir):
    assert main(["localize", str(image_dir), "--tasks", "a,,b",
                 "--backend", "oracle"]) == EXIT_VALIDATION


def test_localize_oracle_needs_annotations(image_dir):
    assert main(["localize", str(image_dir), "--tasks", "a,b",
                 "--backend", "oracle"]) == EXIT_VALIDATION


def test_localize_missing_api_key_fails_before_decode(monkeypatch, tmp_path):
    monkeypatch.delenv("VLM_API_KEY", raising=False)
    # The video path does not exist: the config error must win, which
    # proves the backend is constructed before any decoding starts.
    code = main(["localize", str(tmp_path / "absent"), "--tasks", "a,b",
                 "--backend", "http"])
    assert code == EXIT_VALIDATION


def test_localize_empty_replay_store_exits_backend(
        image_dir, truth_file, tmp_path, capsys):
    store = tmp_path / "empty.jsonl"
    store.touch()
    code = main(["localize", str(image_dir), "--annotations", str(truth_file),
                 "--backend", "replay", "--replay-store", str(store),
                 "--grid", "3x3"] + FAST)
    assert code == EXIT_BACKEND
    record = json.loads(capsys.readouterr().out)
    assert all(s["failed"] for s in record["meta"]["searches"])


def test_localize_record_store_round_trip(
        image_dir, truth_file, tmp_path, capsys):
    store = tmp_path / "replies.jsonl"
    base = ["localize", str(image_dir), "--annotations", str(truth_file),
            "--grid", "3x3"] + FAST
    code = main(base + ["--backend", "oracle", "--record-store", str(store)])
    assert code == EXIT_OK
    first = json.loads(capsys.readouterr().out)
    assert store.exists() and store.stat().st_size > 0
    code = main(base + ["--backend", "replay", "--replay-store", str(store)])
    assert code == EXIT_OK
    second = json.loads(capsys.readouterr().out)
    assert second["transitions"] == first["transitions"]


def test_config_file_and_flag_precedence(
        image_dir, truth_file, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# evaluation defaults\n"
        "backend = oracle\n"
        "grid = 4x4\n"
        "seed = 7\n"
        "canvas_px = 240\n"
        "workers = 2\n")
    code = main(["localize", str(image_dir), "--annotations",
                 str(truth_file), "--config", str(cfg), "--grid", "3x3"])
    assert code == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    run_cfg = record["meta"]["run_config"]
    assert run_cfg["grid"] == "3x3"
    assert run_cfg["seed"] == 7
    assert run_cfg["canvas_px"] == 240


def test_config_file_prompt_template(image_dir, truth_file, tmp_path, capsys):
    template = "Sequence {task_sequence}; focus {task_focus}; answer now"
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "backend = oracle\n"
        "grid = 3x3\n"
        "canvas_px = 240\n"
        f'prompt.start_template = "{template}"\n')
    code = main(["localize", str(image_dir), "--annotations", str(truth_file),
                 "--config", str(cfg)])
    assert code == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record["meta"]["run_config"]["start_template"] == template


def test_unknown_config_key_rejected(image_dir, truth_file, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("backend = oracle\nnonsense = 1\n")
    code = main(["localize", str(image_dir), "--annotations", str(truth_file),
                 "--config", str(cfg)])
    assert code == EXIT_VALIDATION


def test_evaluate_writes_reports(dataset, tmp_path):
    out = tmp_path / "report.json"
    csv_path = tmp_path / "report.csv"
    code = main(["evaluate", "--dataset", str(dataset),
                 "--backend", "oracle", "--grid", "3x3",
                 "--out", str(out), "--csv", str(csv_path)] + FAST)
    assert code == EXIT_OK
    report = json.loads(out.read_text())
    assert report["n_videos"] == 2
    method = report["rows"][0]
    assert method["aggregate"]["mof"] >= 99.0
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == 3  # header, 3x3, baseline


def test_evaluate_limit(dataset, capsys):
    code = main(["evaluate", "--dataset", str(dataset), "--backend", "oracle",
                 "--grid", "3x3", "--limit", "1"] + FAST)
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["n_videos"] == 1


def test_evaluate_missing_dataset(tmp_path):
    code = main(["evaluate", "--dataset", str(tmp_path / "none"),
                 "--backend", "oracle"])
    assert code == EXIT_VALIDATION


def test_sweep_csv_rows(dataset, tmp_path):
    csv_path = tmp_path / "sweep.csv"
    code = main(["sweep", "--dataset", str(dataset), "--backend", "oracle",
                 "--grids", "2x2,3x3", "--styles", "original,center",
                 "--limit", "1", "--csv", str(csv_path)] + FAST)
    assert code == EXIT_OK
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == 1 + 4 + 1  # header, four combos, baseline
    assert lines[-1].startswith("baseline,")


def test_sweep_rejects_bad_grid(dataset):
    code = main(["sweep", "--dataset", str(dataset), "--backend", "oracle",
                 "--grids", "3by3"])
    assert code == EXIT_VALIDATION


def test_report_exit_code_paths():
    def row(grid, scored, failed):
        return {"grid": grid, "n_videos_scored": scored,
                "failed_videos": failed}

    assert _report_exit_code(
        {"rows": [row("3x3", 3, []), row("baseline", 3, [])]}) == EXIT_OK
    assert _report_exit_code(
        {"rows": [row("3x3", 2, ["v1"]),
                  row("baseline", 3, [])]}) == EXIT_PARTIAL
    assert _report_exit_code(
        {"rows": [row("3x3", 0, ["v1", "v2"]),
                  row("baseline", 2, [])]}) == EXIT_BACKEND


def test_convert_annotations_file_output(tmp_path):
    src = tmp_path / "spans.txt"
    src.write_text("1-8 reach for the cup\n9-40 pour the water\n")
    out = tmp_path / "gt.json"
    code = main(["convert-annotations", str(src), "--fps", "4",
                 "--out", str(out)])
    assert code == EXIT_OK
    gt = load_annotations(out)
    assert gt.video_id == "spans"
    assert gt.task_labels == ["reach for the cup", "pour the water"]
    assert gt.segments[0].end_s == pytest.approx(2.0)
    assert gt.duration_s == pytest.approx(10.0)


def test_convert_annotations_stdout(tmp_path, capsys):
    src = tmp_path / "clip7.txt"
    src.write_text("1-10 stir the mixture\n11-20 wipe the surface\n")
    code = main(["convert-annotations", str(src), "--fps", "5",
                 "--video-id", "demo"])
    assert code == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["video_id"] == "demo"


def test_convert_annotations_missing_input(tmp_path):
    code = main(["convert-annotations", str(tmp_path / "gone.txt"),
                 "--fps", "5"])
    assert code == EXIT_VALIDATION


def test_dump_grid(image_dir, tmp_path, capsys):
    base = tmp_path / "probe"
    code = main(["dump-grid", str(image_dir), "--grid", "3x3",
                 "--canvas-px", "240", "--out", str(base)])
    assert code == EXIT_OK
    assert "probe" in capsys.readouterr().out
    assert (tmp_path / "probe.png").exists()
    labels = json.loads((tmp_path / "probe.labels.json").read_text())
    times = [labels[str(i)] for i in range(1, len(labels) + 1)]
    assert times == sorted(times)
    assert len(labels) == 9
