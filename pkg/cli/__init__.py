"""
CLIモジュールの初期化
"""
