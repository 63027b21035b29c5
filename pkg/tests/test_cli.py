from __future__ import annotations

import json
import shutil

import pytest

from reviewquarantine import cli, pipeline, synthgen
from reviewquarantine.config import ConfigError, PipelineConfig, build_config
from reviewquarantine.reports import read_csv

SMALL_ARGS = ["--seed", "5", "--n-ordinary-users", "200", "--n-popular-users", "4", "--n-spammer-popular-users", "2",
              "--n-businesses", "12", "--n-attacked-businesses", "5", "--organic-reviews-min", "25",
              "--organic-reviews-max", "35", "--n-fake-accounts", "30"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli-data")
    assert cli.main(["synth", "-o", str(d), *SMALL_ARGS]) == 0
    return d


def _inputs(d):
    return ["--users", str(d / "users.json"), "--reviews", str(d / "reviews.json"),
            "--businesses", str(d / "businesses.json")]


@pytest.fixture(scope="module")
def one_shot(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("one-shot")
    assert cli.main(["run", "-o", str(out), *_inputs(data_dir)]) == 0
    return out


def test_version(capsys):
    assert cli.main(["--version"]) == 0
    assert "reviewq" in capsys.readouterr().out


def test_manifest_contents(one_shot):
    m = json.loads((one_shot / pipeline.MANIFEST).read_text())
    assert set(m) == {"config", "seed", "counts", "outputs"}
    assert m["counts"]["cluster"]["popular_users"] == 4
    assert m["counts"]["rsd"]["spiky_businesses"] == 5
    assert m["counts"]["quarantine"]["quarantined@3"] == 2
    assert all(name in m["outputs"] for name in ("clusters.csv", "quarantine.csv", "figures/bic.svg"))
    assert (one_shot / pipeline.TIMINGS).exists() and not (one_shot / pipeline.FAILED).exists()


def test_default_manifest_counts(default_run):
    _, _, manifest, _ = default_run
    c = manifest["counts"]
    assert (c["cluster"]["popular_users"], c["rsd"]["spiky_businesses"], c["quarantine"]["quarantined@3"]) == (10, 40, 5)


def test_stage_by_stage_equals_one_shot(data_dir, one_shot, tmp_path):
    out = tmp_path / "staged"
    for stage in pipeline.STAGES:
        assert cli.main([stage, "-o", str(out), *_inputs(data_dir)]) == 0
    assert pipeline.output_digests(out) == pipeline.output_digests(one_shot)


def test_report_rerenders_from_csvs_only(one_shot, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(one_shot, out)
    shutil.rmtree(out / pipeline.FIGURES)
    (out / pipeline.SNAPSHOT).unlink()  # the report never touches the corpus
    assert cli.main(["report", "-o", str(out)]) == 0
    before = {k: v for k, v in pipeline.output_digests(one_shot).items() if k.startswith("figures/")}
    after = {k: v for k, v in pipeline.output_digests(out).items() if k.startswith("figures/")}
    assert before == after and len(after) >= 3


def test_cluster_table_layout(data_dir, tmp_path):
    out = tmp_path / "k4"
    assert cli.main(["ingest", "-o", str(out), *_inputs(data_dir)]) == 0
    assert cli.main(["cluster", "-o", str(out), "--k-min", "4", "--k-max", "4"]) == 0
    rows = read_csv(out / pipeline.CLUSTERS_CSV)
    assert list(rows[0]) == ["Features", "Cluster_0", "Cluster_1", "Cluster_2", "Cluster_3"]
    assert [r["Features"] for r in rows] == [
        "yelping_since", "average_star", "elite_count", "fans", "friends_count", "review_count",
        "total_votes", "total_compliments", "total_users"]
    assert sum(int(rows[-1][f"Cluster_{j}"]) for j in range(4)) == 200 + 4


def test_empty_review_file_is_data_error(data_dir, tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    code = cli.main(["run", "-o", str(tmp_path / "o"), "--users", str(data_dir / "users.json"),
                     "--reviews", str(empty), "--businesses", str(data_dir / "businesses.json")])
    assert code == 2 and "no usable reviews" in capsys.readouterr().err
    assert (tmp_path / "o" / pipeline.FAILED).read_text().startswith("stage: ingest")


def test_stage_out_of_order_names_producer(tmp_path, capsys):
    assert cli.main(["extract", "-o", str(tmp_path)]) == 2
    assert "'ingest'" in capsys.readouterr().err


def test_missing_input_file(tmp_path):
    assert cli.main(["ingest", "-o", str(tmp_path), "--users", "nope", "--reviews", "nope",
                     "--businesses", "nope"]) == 2


@pytest.mark.parametrize("argv", [
    ["run", "--k-min", "5", "--k-max", "2"],
    ["run", "--s-threshold", "1.5"],
    ["run", "--window-start", "2016-01-01", "--window-end", "2015-01-01"],
    ["run", "--bogus"],
    ["frobnicate"],
])
def test_usage_errors(argv, tmp_path):
    assert cli.main([*argv, "-o", str(tmp_path)] if argv[0] == "run" else argv) == 1


def test_bad_orientation_file_is_config_error(one_shot, tmp_path):
    out = tmp_path / "o"
    shutil.copytree(one_shot, out)
    (tmp_path / "orient").write_text("XYZ=H\n")
    assert cli.main(["score", "-o", str(out), "--orientations", str(tmp_path / "orient")]) == 1


def test_config_precedence(tmp_path):
    f = tmp_path / "cfg"
    f.write_text("# comment\nk_max = 5\nseed=3\nout-dir = from-file\nstrict_quarantine = yes\n")
    cfg = build_config({}, f, env={})
    assert (cfg.k_max, cfg.seed, str(cfg.out_dir), cfg.strict_quarantine) == (5, 3, "from-file", True)
    cfg = build_config({}, f, env={"REVIEWQ_OUTPUT_DIR": "from-env"})
    assert str(cfg.out_dir) == "from-env"
    cfg = build_config({"seed": 9, "out_dir": "from-flag", "k_max": None}, f, env={"REVIEWQ_OUTPUT_DIR": "from-env"})
    assert (cfg.seed, str(cfg.out_dir), cfg.k_max) == (9, "from-flag", 5)
    assert build_config({}, None, env={}) == PipelineConfig()


@pytest.mark.parametrize("text", ["k_max\n", "nonsense = 1\n", "seed = abc\n"])
def test_bad_config_file(tmp_path, text):
    f = tmp_path / "cfg"
    f.write_text(text)
    with pytest.raises(ConfigError):
        build_config({}, f, env={})


def test_config_echo_excludes_output_dir():
    echo = PipelineConfig().echo()
    assert "out_dir" not in echo and echo["window_start"] == "2004-01-01"
    json.dumps(echo)
