import json
import subprocess
import sys

import pytest

from icregress import cli

TRAIN = {"epochs": 1, "batch_size": 16}
DESC = {"conv_channels": [8, 4], "fc_widths": [8, 1], "dropout_p": 0.0}


def run(*args):
    return subprocess.run([sys.executable, "-m", "icregress", *map(str, args)], capture_output=True, text=True)


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def test_single_run_pipeline(tmp_path):
    gen = write(tmp_path / "gen.json", {"generate": {"n_participants": 4, "n_segments": 6, "seed": 1}})
    r = run("generate", gen, "--out", tmp_path / "data")
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["samples"] == 24

    base_cfg = write(tmp_path / "base.json", {"data": {"path": str(tmp_path / "data")}, "K": 0.25,
                                              "train": TRAIN, "descriptor": DESC})
    r = run("train-base", base_cfg, "--out", tmp_path / "base", "--seed", 3)
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["exemplars"] == 6
    assert (tmp_path / "base" / "base.ckpt").exists() and (tmp_path / "base" / "exemplars.jsonl").exists()

    new = write(tmp_path / "new.json", {"generate": {"n_participants": 2, "n_segments": 6, "seed": 9,
                                                     "prefix": "q", "params": {"pointing_drift_deg": 8}}})
    assert run("generate", new, "--out", tmp_path / "new").returncode == 0
    adapt_cfg = write(tmp_path / "adapt.json", {"data": {"path": str(tmp_path / "new")},
                                                "base": str(tmp_path / "base"), "train": TRAIN})
    r = run("adapt", adapt_cfg, "--out", tmp_path / "adapted")
    assert r.returncode == 0, r.stderr

    ev = write(tmp_path / "ev.json", {"data": {"path": str(tmp_path / "new")},
                                      "checkpoint": str(tmp_path / "adapted" / "adapted.ckpt"), "records": True})
    r = run("evaluate", ev, "--out", tmp_path / "eval")
    assert r.returncode == 0, r.stderr
    result = json.loads((tmp_path / "eval" / "eval.json").read_text())
    assert result["n_samples"] == 12 and set(result["accuracy"]) == {"MRDE", "SegObj", "MinDT"}
    assert (tmp_path / "eval" / "records.csv").exists()

    # resume finds the finished base run and skips retraining
    r = run("train-base", base_cfg, "--out", tmp_path / "base", "--seed", 3, "--resume")
    assert json.loads(r.stdout)["status"] == "resumed"


def test_experiment_and_emit_plots(tmp_path):
    cfg = write(tmp_path / "abl.json", {
        "data": {"generate": {"n_participants": 10, "n_segments": 6, "seed": 4}},
        "masks": [["Pnt"], ["Head"]], "train": TRAIN, "descriptor": DESC,
    })
    r = run("ablate", cfg, "--out", tmp_path / "abl", "--seed", 5)
    assert r.returncode == 0, r.stderr
    report = json.loads((tmp_path / "abl" / "report.json").read_text())
    assert report["config"]["seeds"] == [5]
    first = (tmp_path / "abl" / "ablation.csv").read_bytes()
    r = run("emit-plots", write(tmp_path / "emit.json", {"report": str(tmp_path / "abl" / "report.json")}),
            "--out", tmp_path / "plots")
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "plots" / "ablation.csv").read_bytes() == first
    r = run("ablate", cfg, "--out", tmp_path / "abl", "--seed", 5, "--resume")
    assert r.returncode == 0 and (tmp_path / "abl" / "ablation.csv").read_bytes() == first


@pytest.mark.parametrize("argv, fragment", [
    (["generate", "missing.json"], "config not found"),
    (["ablate", "{cfg}"], "ablate runs kind ablation"),
    (["adapt", "{adapt}"], "missing checkpoint"),
    (["personalize", "{pers}", "--resume"], "resume requested"),
])
def test_errors_are_json_on_stderr(tmp_path, argv, fragment):
    paths = {
        "cfg": write(tmp_path / "c.json", {"kind": "nonsense"}),
        "adapt": write(tmp_path / "a.json", {"data": {"generate": {}}, "base": str(tmp_path / "nope")}),
        "pers": write(tmp_path / "p.json", {"out_dir": str(tmp_path / "fresh")}),
    }
    argv = [a.format(**{k: str(v) for k, v in paths.items()}) for a in argv]
    r = run(*argv)
    assert r.returncode != 0
    err = json.loads(r.stderr.strip().splitlines()[-1])
    assert fragment in err["message"] and err["command"] == argv[0]


def test_usage_error_is_json(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate", "x.json"])
    assert e.value.code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"


def test_all_subcommands_registered():
    assert set(cli.COMMANDS) == {"generate", "train-base", "adapt", "evaluate", "ablate", "sweep-k",
                                 "personalize", "forgetting", "emit-plots"}
