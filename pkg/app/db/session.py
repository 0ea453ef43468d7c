from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from sqlalchemy import Engine, create_engine
from sqlalchemy.engine import make_url
from sqlalchemy.orm import Session, sessionmaker

from app.core.config import get_settings
from app.core.logging import get_logger
from app.db.base import Base
from app.db.models.run import ExperimentRun  # noqa: F401  (registers the table)

logger = get_logger(__name__)

# -------------------------------------------------
# Engine
# -------------------------------------------------
_engine: Engine | None = None
_session_factory: sessionmaker[Session] | None = None


def _create_engine(url: str) -> Engine:
    parsed = make_url(url)
    if parsed.get_backend_name() == "sqlite" and parsed.database not in (None, "", ":memory:"):
        Path(parsed.database).parent.mkdir(parents=True, exist_ok=True)
    return create_engine(url, echo=get_settings().DB_ECHO, pool_pre_ping=True)


# -------------------------------------------------
# Initialization / Shutdown
# -------------------------------------------------
def init_db(url: str | None = None) -> bool:
    """
    Creates the registry engine and tables. Returns False when no registry
    URL is configured.
    """
    global _engine, _session_factory

    if _engine is not None:
        return True

    url = url or get_settings().RUN_REGISTRY_URL
    if not url:
        return False

    logger.info("registry_initializing")
    _engine = _create_engine(url)
    _session_factory = sessionmaker(bind=_engine, expire_on_commit=False)
    Base.metadata.create_all(_engine)
    return True


def close_db() -> None:
    global _engine, _session_factory

    if _engine is not None:
        _engine.dispose()
        _engine = None
        _session_factory = None


# -------------------------------------------------
# Sessions
# -------------------------------------------------
@contextmanager
def get_db_session() -> Iterator[Session]:
    """
    Transactional session: commits on success, rolls back on exception.
    """
    if _session_factory is None:
        raise RuntimeError("Run registry not initialized")

    session = _session_factory()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()
