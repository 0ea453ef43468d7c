import json

import pytest

from app.core.exceptions import AcceptanceCheckError, ConfigError
from app.main import main
from app.services.experiment_service import ExperimentService
from app.utils.hashing import canonical_json


CONFIG = """\
kind = "simulate"

[levy]
alpha = 1.0
restrict = [1.0, "infinite"]

[field]
mode = "multiplicative"
window_half_width = 2.0

[sampling]
replications = 3
seed = 17

[analysis]
points = [[0.0], [0.5], [-1.5]]
"""


@pytest.fixture
def first_run(tmp_path):
    path = tmp_path / "experiment.toml"
    path.write_text(CONFIG, encoding="utf-8")
    out = tmp_path / "first"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    return out


def test_replay_reproduces_artifacts(first_run, capsys):
    capsys.readouterr()

    code = main(["replay", str(first_run / "manifest.json"), "--threads", "3"])

    assert code == 0
    replay_dir = first_run / "replay"
    assert capsys.readouterr().out.strip() == str(replay_dir / "manifest.json")
    original = json.loads((first_run / "manifest.json").read_text(encoding="utf-8"))
    replayed = json.loads((replay_dir / "manifest.json").read_text(encoding="utf-8"))
    assert replayed["artifacts"] == original["artifacts"]
    assert replayed["config_hash"] == original["config_hash"]
    # the canonical config spells the infinite bound out
    assert original["config"]["levy"]["restrict"] == [1.0, "infinite"]


def test_replay_detects_a_changed_artifact(first_run, tmp_path):
    manifest_path = first_run / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest["artifacts"]["field.csv"] = "0" * 64
    manifest_path.write_text(canonical_json(manifest, indent=2) + "\n", encoding="utf-8")

    with pytest.raises(AcceptanceCheckError) as exc:
        ExperimentService.replay(manifest_path, out_dir=tmp_path / "again")

    assert exc.value.details == {"artifacts": ["field.csv"]}
    assert main(["replay", str(manifest_path), "--out", str(tmp_path / "cli")]) == 3


def test_replay_rejects_tampered_config(first_run):
    manifest_path = first_run / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest["config"]["sampling"]["replications"] = 4
    manifest_path.write_text(canonical_json(manifest, indent=2) + "\n", encoding="utf-8")

    with pytest.raises(ConfigError):
        ExperimentService.replay(manifest_path)

    assert main(["replay", str(manifest_path)]) == 1


def test_replay_of_missing_manifest(tmp_path):
    assert main(["replay", str(tmp_path / "nowhere" / "manifest.json")]) == 1


def test_failed_checks_exit_three_after_writing(monkeypatch, tmp_path):
    from app.services import experiment_service

    def failing_verify(cls, config, *, writer, seed, threads):
        writer.write_csv("verify.csv", ["lemma", "pass"], [["gap_cdf", False]])
        return ["gap_cdf"]

    monkeypatch.setattr(
        experiment_service.ExperimentService, "_run_verify", classmethod(failing_verify)
    )
    out = tmp_path / "verify"

    assert main(["run", "--preset", "verify", "--out", str(out)]) == 3

    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["exit_code"] == 3
    assert "verify.csv" in manifest["artifacts"]
