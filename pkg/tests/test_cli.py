import json
import subprocess
import sys
from pathlib import Path

import pytest

from kbdetect.cli import main
from kbdetect.pipeline import shipped_rules_path
from kbdetect.scenegen import default_scene_spec, priors_from_truth, save_scene_spec
from kbdetect.knowledge import load_kb, save_kb


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    save_scene_spec(default_scene_spec(), d / "scene.json")
    assert main(["gen", "--spec", str(d / "scene.json"), "--out", str(d / "scene.xyz"),
                 "--truth", str(d / "truth.json")]) == 0
    return d


def test_gen_outputs(files):
    lines = (files / "scene.xyz").read_text().splitlines()
    assert len(lines) > 90_000
    assert len(load_kb(files / "truth.json").individuals) == 8


def test_gen_missing_spec(capsys):
    with pytest.raises(SystemExit) as e:
        main(["gen", "--out", "a.xyz", "--truth", "t.json"])
    assert e.value.code == 2
    assert "--spec" in capsys.readouterr().err


def test_gen_unwritable(files, capsys):
    code = main(["gen", "--spec", str(files / "scene.json"), "--out", "/nonexistent/dir/a.xyz",
                 "--truth", str(files / "t2.json")])
    assert code == 1
    assert capsys.readouterr().err.startswith("error:")


def test_detect_is_reproducible(files):
    outs = []
    for k in range(2):
        out = files / f"report{k}.json"
        assert main(["detect", "--mode", "generic", "--cloud", str(files / "scene.xyz"),
                     "--out", str(out), "--seed", "42", "--boxes", str(files / f"b{k}.ply"),
                     "--log", str(files / f"log{k}.json")]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["mode"] == "generic"
    assert (files / "b0.ply").read_text().startswith("ply\n")
    assert "firings" in json.loads((files / "log0.json").read_text())


def test_eval_perfect(files, capsys):
    report = files / "report0.json"
    if not report.exists():
        test_detect_is_reproducible(files)
    capsys.readouterr()
    assert main(["eval", "--report", str(report), "--truth", str(files / "truth.json"),
                 "--json", str(files / "scores.json")]) == 0
    table = capsys.readouterr().out
    assert "Gate_Counter" in table and "overall mean IoU" in table
    scores = json.loads((files / "scores.json").read_text())
    assert all(c["precision"] == 1.0 and c["recall"] == 1.0 for c in scores["classes"])


def test_eval_empty_report(files, capsys):
    rep = files / "empty.json"
    rep.write_text(json.dumps({"mode": "generic", "iterations": 1, "elements": [], "not_found": [],
                               "searches": {}, "config": {}, "derivation_log": {}}))
    assert main(["eval", "--report", str(rep), "--truth", str(files / "truth.json")]) == 0
    assert "n/a" in capsys.readouterr().out


def test_eval_unknown_truth_label(files, capsys):
    truth = load_kb(files / "truth.json")
    truth.declare_class("Spaceship")
    truth.add_individual("ufo", "Spaceship")
    truth.assert_fact("ufo", "hasBoxGeometry", truth.value("floor", "hasBoxGeometry"))
    save_kb(truth, files / "bad_truth.json")
    rep = files / "empty.json"
    if not rep.exists():
        test_eval_empty_report(files, capsys)
    assert main(["eval", "--report", str(rep), "--truth", str(files / "bad_truth.json")]) == 1
    assert "Spaceship" in capsys.readouterr().err


def test_detect_specific(files):
    priors = priors_from_truth(load_kb(files / "truth.json"))
    save_kb(priors, files / "priors.json")
    out = files / "spec_report.json"
    assert main(["detect", "--mode", "specific", "--cloud", str(files / "scene.xyz"),
                 "--kb", str(files / "priors.json"), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["not_found"] == [] and len(rep["searches"]) == 8


def test_detect_specific_without_priors(files, capsys):
    code = main(["detect", "--mode", "specific", "--cloud", str(files / "scene.xyz"),
                 "--out", str(files / "x.json")])
    assert code == 1
    assert "no priors" in capsys.readouterr().err


def test_detect_unsafe_rules(files, capsys):
    bad = files / "bad.wrl"
    bad.write_text(Path(shipped_rules_path("generic")).read_text()
                   + "\nrule bad : Wall(?x) -> isConnectedTo(?x, ?y)\n")
    code = main(["detect", "--mode", "generic", "--cloud", str(files / "scene.xyz"),
                 "--rules", str(bad), "--out", str(files / "x.json")])
    assert code == 1
    err = capsys.readouterr().err
    assert "violation:" in err and "bad" in err
    assert not (files / "x.json").exists()


def test_rules_check(capsys):
    assert main(["rules-check", shipped_rules_path("generic")]) == 0
    assert "rules ok" in capsys.readouterr().out
    assert main(["rules", "check", shipped_rules_path("specific")]) == 0


def test_rules_check_errors(tmp_path, capsys):
    bad = tmp_path / "bad.wrl"
    bad.write_text("rule bad : Wall(?x) -> isConnectedTo(?x, ?y)\n")
    assert main(["rules-check", str(bad)]) == 1
    assert "violation:" in capsys.readouterr().err
    broken = tmp_path / "broken.wrl"
    broken.write_text("rule r1 : Wall(?x ->\n")
    assert main(["rules", "check", str(broken)]) == 1
    assert "rule syntax" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "kbdetect", "rules-check", shipped_rules_path("generic")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "kbdetect"], capture_output=True, text=True)
    assert r.returncode == 2
