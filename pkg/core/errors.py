"""
例外定義モジュール
ライブラリ層はここで定義した例外を送出し、出力は行わない
"""


class LaglabError(Exception):
    """laglab の全例外の基底クラス"""


class DegenerateFrameError(LaglabError):
    """接フレームが退化している（Gram 行列式が閾値未満）"""


class NonLagrangianError(LaglabError):
    """シンプレクティック形式がフレーム上で消えていない"""


class AngleUnwrapError(LaglabError):
    """差分ステップ間でラグランジュ角が π/2 を超えて跳んだ"""


class StepSizeError(LaglabError):
    """差分ステップまたは積分ステップが小さくなりすぎた"""


class OffSliceError(LaglabError):
    """点が Σλ_j x_j² = C を満たしていない"""


class SliceError(LaglabError):
    """扱えないスライス形状、または符号の異なる時刻間のスケーリング"""


class ModulusCollapseError(LaglabError):
    """ODE 軌道上で |w_j| が下限を割った"""


class NoReturnError(LaglabError):
    """探索範囲内で初期状態への回帰が見つからない"""


class RefinementError(LaglabError):
    """周期の精密化またはシューティングが収束しない"""


class QuadratureError(LaglabError):
    """求積が自己収束判定を満たさない"""


class FitError(LaglabError):
    """対数発散のフィットに失敗した"""


class ConfigError(LaglabError):
    """設定ファイルまたはコマンドライン引数が不正"""
