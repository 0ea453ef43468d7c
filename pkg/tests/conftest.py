import pytest

from app.core.config import get_settings
from app.core.seeding import make_rng
from app.db.session import close_db, get_db_session, init_db
from app.domain.levy import DiracMixture, ParetoTail


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """
    Each test sees default settings, no registry and artifacts under tmp_path.
    """
    monkeypatch.delenv("SHELAB_THREADS", raising=False)
    monkeypatch.delenv("RUN_REGISTRY_URL", raising=False)
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "runs"))
    get_settings.cache_clear()
    close_db()
    yield
    close_db()
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def pareto_one():
    return ParetoTail(1.0)


@pytest.fixture
def pareto_half():
    return ParetoTail(0.5)


@pytest.fixture
def unit_dirac():
    return DiracMixture(((1.0, 1.0),))


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "out"


@pytest.fixture
def registry_url(monkeypatch, tmp_path):
    """
    SQLite run registry enabled through the environment.
    """
    url = f"sqlite:///{tmp_path / 'registry.db'}"
    monkeypatch.setenv("RUN_REGISTRY_URL", url)
    get_settings.cache_clear()
    return url


@pytest.fixture
def db_session(registry_url):
    init_db()
    with get_db_session() as session:
        yield session
