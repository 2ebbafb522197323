import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synchronic import Ledger, LedgerState, Notary, NotaryConfig, keygen  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def notary_keys():
    return keygen(b"test-notary")


@pytest.fixture(scope="session")
def alice_keys():
    return keygen(b"alice")


@pytest.fixture(scope="session")
def bob_keys():
    return keygen(b"bob")


@pytest.fixture
def make_notary(notary_keys):
    def factory(**overrides):
        cfg = dict(notary_id="n0", keypair=notary_keys)
        cfg.update(overrides)
        return Notary(NotaryConfig(**cfg))

    return factory


@pytest.fixture
def notary(make_notary):
    return make_notary()


@pytest.fixture
def make_ledger(alice_keys):
    def factory(notary, keys=alice_keys, global_path="https://alice.example/", periodicity=0, **kw):
        return Ledger(LedgerState(keys, global_path, periodicity), notary, **kw)

    return factory


def advance_to(notary, index):
    """Seal empty blocks until ``index`` is the open one."""
    while notary.current_index() < index:
        notary.seal_block()


def sealing_wait(notary):
    def wait(index):
        advance_to(notary, index + 1)

    return wait
