import json
import shutil
from pathlib import Path

import pytest

from endonav import cli
from endonav import evalsuite as ev
from endonav.ppo import algo

TINY = Path(__file__).parent / "data" / "tiny.yaml"


def run(*argv):
    return cli.main([str(a) for a in argv])


def manifest(d):
    return json.loads((Path(d) / "manifest.json").read_text())


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "E"
    assert run("train", "--config", TINY, "--variant", "E", "--out", out) == 0
    return out


def test_gen_scene_is_idempotent(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("gen-scene", "--config", TINY, "--out", a) == 0
    assert run("gen-scene", "--config", TINY, "--out", b) == 0
    for name in ("cavity.msh", "config.yaml", "targets.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma, mb = manifest(a), manifest(b)
    assert ma["outputs"] == mb["outputs"] and ma["config_hash"] == mb["config_hash"]


def test_bad_config_names_the_field(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(TINY.read_text().replace("h: 0.04", "h: -0.04"))
    assert run("gen-scene", "--config", bad, "--out", tmp_path / "o") == 2
    assert "scene.h" in capsys.readouterr().err
    bad.write_text(TINY.read_text().replace("substeps: 6", "substepz: 6"))
    assert run("gen-scene", "--config", bad, "--out", tmp_path / "o") == 2
    assert "scene.substepz" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path):
    assert run("gen-scene", "--config", tmp_path / "nope.yaml", "--out", tmp_path) == 2


def test_policy_variant_mapping(desk_run_config):
    c = cli.policy_scene(desk_run_config, "C")
    d = cli.policy_scene(desk_run_config, "D")
    assert (c.variant, c.force_observation) == ("SE", True)
    assert (d.variant, d.force_observation) == ("DE", False)
    a = cli.policy_scene(desk_run_config, "A")
    assert a.variant == "FE" and not a.force_observation


def test_train_outputs(trained):
    m = manifest(trained)
    names = {o["path"] for o in m["outputs"]}
    assert {"final.ckpt", "last.ckpt", "learning_curve.csv", "config.yaml", "checkpoint_00002.ckpt"} <= names
    assert m["timesteps"] == 512 and m["policy"] == "E"
    pol = algo.load_policy(trained / "final.ckpt")
    assert pol.tags["force_observation"] is True


def test_resume_with_changed_config_is_refused(trained, tmp_path, capsys):
    out = tmp_path / "E"
    shutil.copytree(trained, out)
    changed = tmp_path / "changed.yaml"
    changed.write_text(TINY.read_text().replace("epochs: 1", "epochs: 2"))
    assert run("train", "--config", changed, "--variant", "E", "--out", out, "--resume") == 2
    assert "refusing to resume" in capsys.readouterr().err


def test_resume_missing_checkpoint(tmp_path):
    assert run("train", "--config", TINY, "--variant", "E", "--out", tmp_path, "--resume") == 3


def test_eval_manifest_and_replay(trained, tmp_path):
    out = tmp_path / "ev"
    assert run("eval", trained / "final.ckpt", "--config", TINY, "--variant", "DE",
               "--trials", 2, "--max-steps", 9, "--out", out) == 0
    m = manifest(out)
    assert m["trials"] == 2 and m["max_steps"] == 9 and m["variant"] == "DE"
    rep = ev.read_report(out / "report.json")
    assert rep.trials == 2 and len(rep.outcomes) == 2
    logs = ev.import_logs(out / "episodes.jsonl")
    assert len(logs) == 2 and all(lg.steps <= 9 for lg in logs)
    assert [lg.to_dict() for lg in ev.import_logs(out / "episodes.csv")] == [lg.to_dict() for lg in logs]
    rp = tmp_path / "rp"
    assert run("replay", out / "episodes.jsonl", "--out", rp) == 0
    assert json.loads((rp / "replay.json").read_text())["max_drift"] == 0.0


def test_eval_is_repeatable(trained, tmp_path):
    for d in ("a", "b"):
        assert run("eval", trained / "final.ckpt", "--config", TINY, "--trials", 2, "--max-steps", 6,
                   "--out", tmp_path / d) == 0
    assert (tmp_path / "a" / "episodes.jsonl").read_bytes() == (tmp_path / "b" / "episodes.jsonl").read_bytes()


def test_compare_and_plot(trained, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert run("compare", "--runs", trained.parent, "--policies", "E", "B", "--variant", "SE", "DE",
               "--config", TINY, "--trials", 1, "--max-steps", 5, "--out", out) == 0
    md = (out / "table.md").read_text()
    assert "absent" in md
    table = ev.read_table(out / "table.csv")
    assert table.sr("B", "SE") is None and table.sr("E", "DE") is not None
    assert len(table.rows()) == 4
    pl = tmp_path / "pl"
    assert run("plot", "--curve", trained / "learning_curve.csv", "--table", out / "table.csv", "--out", pl) == 0
    assert (pl / "curve_sr.svg").exists() and (pl / "sr_bars.svg").exists()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["--version"])
    assert e.value.code == 0
    assert capsys.readouterr().out.strip()


def test_plot_profile_policy_filter(tmp_path):
    logs = tmp_path / "e.jsonl"
    from test_evalsuite import synthetic_log
    ev.export_logs([synthetic_log(i) for i in range(3)], logs)
    assert run("plot", "--logs", logs, "--policy", "nobody", "--out", tmp_path / "none") == 0
    assert not (tmp_path / "none" / "force_profile.svg").exists()
    assert run("plot", "--logs", logs, "--policy", "pol", "--out", tmp_path / "some") == 0
    prof = json.loads((tmp_path / "some" / "force_profile.json").read_text())
    assert prof["n_logs"] == 3
