import uuid
from datetime import datetime, timezone

from sqlalchemy import Column, DateTime, Index, Integer, String

from app.db.base import Base


class ExperimentRun(Base):
    """
    One completed experiment run, indexed by its config hash.

    Registry rows never feed back into artifacts.
    """

    # -------------------------------------------------
    # Primary Key
    # -------------------------------------------------
    id = Column(
        String(36),
        primary_key=True,
        default=lambda: str(uuid.uuid4()),
    )

    # -------------------------------------------------
    # Run Identity
    # -------------------------------------------------
    kind = Column(
        String(64),
        nullable=False,
        index=True,
        comment="Experiment kind (simulate, tail, ...)",
    )

    config_hash = Column(
        String(64),
        nullable=False,
        comment="SHA-256 of the canonical config JSON",
    )

    seed = Column(
        String(32),
        nullable=False,
        comment="Master seed as a decimal string (uint64 does not fit BIGINT)",
    )

    # -------------------------------------------------
    # Outputs
    # -------------------------------------------------
    output_dir = Column(
        String(1024),
        nullable=False,
    )

    manifest_hash = Column(
        String(64),
        nullable=False,
        comment="SHA-256 of manifest.json",
    )

    exit_code = Column(
        Integer,
        nullable=False,
    )

    # -------------------------------------------------
    # Audit Fields
    # -------------------------------------------------
    created_at = Column(
        DateTime(timezone=True),
        nullable=False,
        default=lambda: datetime.now(timezone.utc),
    )

    __table_args__ = (Index("ix_experiment_runs_config_seed", "config_hash", "seed"),)
