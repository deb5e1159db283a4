"""
laglab - ラグランジュ自己相似解の数値実験ツール
メインエントリーポイント
"""
import logging
import sys
import warnings
warnings.filterwarnings('ignore', category=FutureWarning)

from cli.app import dispatch, parse_args
from core.config import Config
from core.errors import ConfigError

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: str):
    """ログは標準エラーへ（標準出力はレポート専用）"""
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level.upper(), logging.WARNING),
                        format=LOG_FORMAT)


def main(argv=None) -> int:
    """アプリケーションのメインエントリーポイント"""
    args = parse_args(argv)

    # 設定の読み込み（config.json → .env → LAGLAB_* 環境変数）
    try:
        config = Config()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    setup_logging(args.log_level or config.get("app.log_level", "WARNING"))
    return dispatch(args, config)


if __name__ == "__main__":
    sys.exit(main())
