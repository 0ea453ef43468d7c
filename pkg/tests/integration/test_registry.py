from app.db.session import get_db_session, init_db
from app.main import main
from app.repositories.run_repository import RunRepository


def test_runs_without_registry_exits_one(capsys):
    assert main(["runs"]) == 1

    assert "RUN_REGISTRY_URL" in capsys.readouterr().err


def test_init_db_is_off_without_url():
    assert init_db() is False


def test_repository_create_and_lookup(db_session):
    RunRepository.create(
        db_session,
        kind="tail",
        config_hash="a" * 64,
        seed=2**63 + 5,
        output_dir="runs/tail",
        manifest_hash="b" * 64,
        exit_code=0,
    )
    RunRepository.create(
        db_session,
        kind="dimension",
        config_hash="c" * 64,
        seed=1,
        output_dir="runs/dimension",
        manifest_hash="d" * 64,
        exit_code=3,
    )

    latest = RunRepository.get_latest(db_session, config_hash="a" * 64, seed=2**63 + 5)
    assert latest is not None
    assert latest.output_dir == "runs/tail"
    assert int(latest.seed) == 2**63 + 5

    assert RunRepository.get_latest(db_session, config_hash="a" * 64, seed=1) is None
    assert [r.kind for r in RunRepository.list_runs(db_session, kind="dimension")] == ["dimension"]
    assert len(RunRepository.list_runs(db_session)) == 2
    assert len(RunRepository.list_runs(db_session, limit=1)) == 1


def test_runs_are_recorded_and_listed(registry_url, tmp_path, capsys):
    out = tmp_path / "classify"
    assert main(["run", "--preset", "classify", "--out", str(out)]) == 0
    capsys.readouterr()

    assert main(["runs", "--kind", "classify"]) == 0

    listing = capsys.readouterr().out.strip().splitlines()
    assert len(listing) == 1
    assert "classify" in listing[0]
    assert str(out) in listing[0]

    init_db()
    with get_db_session() as db:
        (run,) = RunRepository.list_runs(db)
        assert run.exit_code == 0
        assert len(run.manifest_hash) == 64

    assert main(["runs", "--kind", "tail"]) == 0
    assert capsys.readouterr().out.strip() == ""
