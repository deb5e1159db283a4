"""
実行管理モジュール
"""
import json
import uuid
from typing import Dict, Iterable, List

from .database import Database


class RunManager:
    """実行アーカイブの窓口"""

    def __init__(self, database: Database):
        """
        初期化

        Args:
            database: データベースインスタンス
        """
        self.db = database

    def start_run(self, command: str, config: Dict) -> str:
        """
        新しい実行を登録

        Args:
            command: サブコマンド名
            config: RunConfig.to_dict()

        Returns:
            作成された実行ID
        """
        run_id = str(uuid.uuid4())
        self.db.create_run(run_id, command, json.dumps(config, sort_keys=True))
        return run_id

    def record(self, run_id: str, records: Iterable[Dict]) -> int:
        """求積結果を保存し、保存できた件数を返す"""
        return sum(1 for r in records if self.db.add_record(run_id, r))

    def finish(self, run_id: str, verdict: str) -> bool:
        return self.db.set_verdict(run_id, verdict)

    def get_all_runs(self) -> List[Dict]:
        return self.db.get_runs()

    def get_run_records(self, run_id: str) -> List[Dict]:
        """
        特定の実行の記録を取得

        Args:
            run_id: 実行ID
        """
        return self.db.get_records(run_id)

    def delete_run(self, run_id: str) -> bool:
        return self.db.delete_run(run_id)
