"""
Coreモジュールの初期化
幾何・二つの族・ブラッケ検証・設定・実行アーカイブ
"""
