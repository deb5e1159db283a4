"""
database / run_manager モジュールのテスト
"""
import json
import sqlite3

import pytest

from core.database import Database
from core.run_manager import RunManager


@pytest.fixture
def database(tmp_path):
    db = Database(str(tmp_path / "archive" / "runs.db"))
    db.initialize()
    return db


def record(t, variation=0.5):
    return {"t": t, "mass": 1.0, "variation": variation, "error_estimate": 1e-9, "grid": "r8x8/a16/s64"}


class TestDatabase:
    def test_create_and_list(self, database):
        assert database.create_run("a", "brakke", "{}")
        assert database.create_run("b", "verify", "{}")
        assert [r["id"] for r in database.get_runs()] == ["b", "a"]

    def test_duplicate_id(self, database):
        database.create_run("a", "brakke", "{}")
        assert not database.create_run("a", "brakke", "{}")

    def test_records_sorted_by_t(self, database):
        database.create_run("a", "brakke", "{}")
        for t in (0.5, -0.5, 0.0):
            assert database.add_record("a", record(t))
        assert [r["t"] for r in database.get_records("a")] == [-0.5, 0.0, 0.5]

    def test_incomplete_record(self, database):
        database.create_run("a", "brakke", "{}")
        assert not database.add_record("a", {"t": 0.1})

    def test_verdict(self, database):
        database.create_run("a", "brakke", "{}")
        assert database.set_verdict("a", "PASS")
        assert database.get_runs()[0]["verdict"] == "PASS"
        assert not database.set_verdict("missing", "PASS")

    def test_delete(self, database):
        database.create_run("a", "brakke", "{}")
        database.add_record("a", record(0.1))
        assert database.delete_run("a")
        assert database.get_runs() == []
        assert database.get_records("a") == []


class TestRunManager:
    def test_lifecycle(self, database):
        manager = RunManager(database)
        run_id = manager.start_run("brakke", {"levels": 8, "family": "integer"})
        assert manager.record(run_id, [record(-0.25), record(-0.5)]) == 2
        assert manager.finish(run_id, "FAIL")

        runs = manager.get_all_runs()
        assert runs[0]["id"] == run_id
        assert json.loads(runs[0]["config"]) == {"family": "integer", "levels": 8}
        assert [r["t"] for r in manager.get_run_records(run_id)] == [-0.5, -0.25]

        assert manager.delete_run(run_id)
        assert manager.get_all_runs() == []


class TrackedConnection:
    """close の呼び出しを記録する sqlite3 接続のラッパー"""

    def __init__(self, conn, log):
        object.__setattr__(self, "_conn", conn)
        object.__setattr__(self, "_log", log)

    def __getattr__(self, name):
        return getattr(self._conn, name)

    def __setattr__(self, name, value):
        setattr(self._conn, name, value)

    def close(self):
        self._log.append("close")
        self._conn.close()


@pytest.fixture
def connection_log(monkeypatch):
    log = []
    connect = sqlite3.connect

    def tracked(*args, **kwargs):
        log.append("open")
        return TrackedConnection(connect(*args, **kwargs), log)

    monkeypatch.setattr(sqlite3, "connect", tracked)
    return log


class TestConnectionLifetime:
    def test_failed_insert_closes(self, database, connection_log):
        assert database.create_run("a", "brakke", "{}")
        assert not database.create_run("a", "brakke", "{}")
        assert connection_log.count("open") == connection_log.count("close") == 2

    def test_failed_query_closes(self, tmp_path, connection_log):
        db = Database(str(tmp_path / "empty.db"))
        with pytest.raises(sqlite3.OperationalError):
            db.get_runs()
        assert connection_log == ["open", "close"]

    def test_usable_after_error(self, database):
        database.create_run("a", "brakke", "{}")
        assert not database.create_run("a", "brakke", "{}")
        assert database.add_record("a", record(0.25))
        assert [r["t"] for r in database.get_records("a")] == [0.25]
