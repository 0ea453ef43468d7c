from typing import Optional

from sqlalchemy import select
from sqlalchemy.orm import Session

from app.db.models.run import ExperimentRun


class RunRepository:
    """
    Data access layer for ExperimentRun entries.
    """

    @classmethod
    def create(
        cls,
        db: Session,
        *,
        kind: str,
        config_hash: str,
        seed: int,
        output_dir: str,
        manifest_hash: str,
        exit_code: int,
    ) -> ExperimentRun:
        run = ExperimentRun(
            kind=kind,
            config_hash=config_hash,
            seed=str(seed),
            output_dir=output_dir,
            manifest_hash=manifest_hash,
            exit_code=exit_code,
        )
        db.add(run)
        db.flush()
        return run

    @classmethod
    def get_latest(cls, db: Session, *, config_hash: str, seed: int) -> Optional[ExperimentRun]:
        """
        Most recent run for a (config, seed) pair.
        """
        stmt = (
            select(ExperimentRun)
            .where(
                ExperimentRun.config_hash == config_hash,
                ExperimentRun.seed == str(seed),
            )
            .order_by(ExperimentRun.created_at.desc())
        )
        return db.execute(stmt).scalars().first()

    @classmethod
    def list_runs(
        cls, db: Session, *, kind: str | None = None, limit: int = 50
    ) -> list[ExperimentRun]:
        stmt = select(ExperimentRun).order_by(ExperimentRun.created_at.desc()).limit(limit)
        if kind is not None:
            stmt = stmt.where(ExperimentRun.kind == kind)
        return list(db.execute(stmt).scalars().all())
