"""
pytest の共通設定
リポジトリのルートを import パスに入れる（core / cli をそのまま import できるように）
"""
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
