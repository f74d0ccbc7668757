import pytest

from clav.budget import DEFAULTS, budget


def test_defaults(monkeypatch):
    monkeypatch.delenv("CLAV_BUDGET", raising=False)
    assert budget("tuples") == DEFAULTS["tuples"] == 10**8
    assert budget("structures") == 10**7
    assert budget("tuples", 5) == 5


def test_env(monkeypatch):
    monkeypatch.setenv("CLAV_BUDGET", "1e3")
    assert all(budget(name) == 1000 for name in DEFAULTS)
    monkeypatch.setenv("CLAV_BUDGET", "tables=7, entries=2e4")
    assert budget("tables") == 7 and budget("entries") == 20000
    assert budget("tuples") == DEFAULTS["tuples"]
    assert budget("tables", 9) == 9


def test_env_rejects_unknown(monkeypatch):
    monkeypatch.setenv("CLAV_BUDGET", "bogus=1")
    with pytest.raises(ValueError):
        budget("tuples")
