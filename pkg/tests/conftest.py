import pytest
from hypothesis import HealthCheck, settings

from qrkey.identity import generate_identity
from qrkey.portal import LocalPortalClient, PortalService

settings.register_profile(
    "qrkey", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("qrkey")

# acceptance results, printed once at the end of the run
ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail=""):
    ACCEPTANCE[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        line = f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))


@pytest.fixture(scope="session")
def alice():
    return generate_identity("alice", 1_700_000_000)


@pytest.fixture(scope="session")
def bob():
    return generate_identity("bob", 1_700_000_000)


@pytest.fixture(scope="session")
def mallory():
    return generate_identity("mallory", 1_700_000_000)


@pytest.fixture(scope="session")
def key_pool():
    """A handful of extra identities for tests that sample many keypairs."""
    return [generate_identity(f"user{i}", 1_700_000_000 + i) for i in range(8)]


@pytest.fixture
def service():
    return PortalService(clock=lambda: 1_700_000_000.0)


@pytest.fixture
def local_client(service):
    def make(user=None):
        c = LocalPortalClient(service)
        if user:
            c.create_account(user)
        return c

    return make


@pytest.fixture
def isolated_env(tmp_path, monkeypatch):
    monkeypatch.setenv("HOME", str(tmp_path))
    monkeypatch.setenv("QK_PASSPHRASE", "correct horse")
    for var in ("QK_CONFIG", "QK_KEYSTORE", "QK_PORTAL"):
        monkeypatch.delenv(var, raising=False)
    return tmp_path


def cv2_or_skip():
    return pytest.importorskip("cv2")

