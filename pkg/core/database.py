"""
実行アーカイブモジュール
brakke / verify の実行結果を SQLite に記録する
"""
import logging
import os
import sqlite3
from contextlib import closing, contextmanager
from typing import Dict, Iterator, List

logger = logging.getLogger(__name__)


class Database:
    """SQLite 実行アーカイブ"""

    def __init__(self, db_path: str = "data/runs.db"):
        """
        初期化

        Args:
            db_path: データベースファイルのパス
        """
        self.db_path = db_path
        self._ensure_data_dir()

    def _ensure_data_dir(self):
        """データディレクトリの存在を確認、なければ作成"""
        directory = os.path.dirname(self.db_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

    @contextmanager
    def _connect(self, rows: bool = False) -> Iterator[sqlite3.Connection]:
        """呼び出しごとの接続。クエリが失敗しても閉じる"""
        with closing(sqlite3.connect(self.db_path)) as conn:
            if rows:
                conn.row_factory = sqlite3.Row
            yield conn

    def initialize(self):
        """データベーステーブルの初期化"""
        with self._connect() as conn:
            cursor = conn.cursor()

            # 実行テーブル
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id TEXT PRIMARY KEY,
                    command TEXT NOT NULL,
                    config TEXT NOT NULL,
                    verdict TEXT,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    updated_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            """)

            # t ごとの求積結果
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS records (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id TEXT NOT NULL,
                    t REAL,
                    mass REAL,
                    variation REAL,
                    error_estimate REAL,
                    grid TEXT,
                    FOREIGN KEY (run_id) REFERENCES runs(id)
                )
            """)

            conn.commit()

    def create_run(self, run_id: str, command: str, config_json: str) -> bool:
        """
        実行を登録

        Args:
            run_id: 実行ID
            command: サブコマンド名
            config_json: RunConfig の JSON

        Returns:
            成功した場合True
        """
        try:
            with self._connect() as conn:
                conn.execute(
                    "INSERT INTO runs (id, command, config) VALUES (?, ?, ?)",
                    (run_id, command, config_json)
                )
                conn.commit()
            return True
        except sqlite3.Error as e:
            logger.warning("実行 %s を登録できません: %s", run_id, e)
            return False

    def add_record(self, run_id: str, record: Dict) -> bool:
        """
        求積結果を1行追加

        Args:
            run_id: 実行ID
            record: t, mass, variation, error_estimate, grid を持つ辞書

        Returns:
            成功した場合True
        """
        try:
            with self._connect() as conn:
                cursor = conn.cursor()
                cursor.execute(
                    "INSERT INTO records (run_id, t, mass, variation, error_estimate, grid) "
                    "VALUES (?, ?, ?, ?, ?, ?)",
                    (run_id, record["t"], record["mass"], record["variation"],
                     record["error_estimate"], record["grid"])
                )
                cursor.execute(
                    "UPDATE runs SET updated_at = CURRENT_TIMESTAMP WHERE id = ?",
                    (run_id,)
                )
                conn.commit()
            return True
        except (sqlite3.Error, KeyError) as e:
            logger.warning("実行 %s に記録を追加できません: %s", run_id, e)
            return False

    def set_verdict(self, run_id: str, verdict: str) -> bool:
        """判定を記録"""
        try:
            with self._connect() as conn:
                cursor = conn.execute(
                    "UPDATE runs SET verdict = ?, updated_at = CURRENT_TIMESTAMP WHERE id = ?",
                    (verdict, run_id)
                )
                updated = cursor.rowcount
                conn.commit()
            return updated > 0
        except sqlite3.Error:
            return False

    def get_runs(self) -> List[Dict]:
        """
        全ての実行を新しい順に取得

        Returns:
            実行のリスト
        """
        with self._connect(rows=True) as conn:
            rows = conn.execute(
                "SELECT * FROM runs ORDER BY created_at DESC, rowid DESC"
            ).fetchall()
        return [dict(row) for row in rows]

    def get_records(self, run_id: str) -> List[Dict]:
        """特定の実行の記録を t の昇順で取得"""
        with self._connect(rows=True) as conn:
            rows = conn.execute(
                "SELECT t, mass, variation, error_estimate, grid FROM records "
                "WHERE run_id = ? ORDER BY t ASC, id ASC",
                (run_id,)
            ).fetchall()
        return [dict(row) for row in rows]

    def delete_run(self, run_id: str) -> bool:
        """
        実行とその記録を削除

        Returns:
            成功した場合True
        """
        try:
            with self._connect() as conn:
                conn.execute("DELETE FROM records WHERE run_id = ?", (run_id,))
                conn.execute("DELETE FROM runs WHERE id = ?", (run_id,))
                conn.commit()
            return True
        except sqlite3.Error:
            return False
