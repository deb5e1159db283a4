"""
設定管理モジュール
"""
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List

from dotenv import load_dotenv

from .errors import ConfigError

# 環境変数 → 設定キー
ENV_OVERRIDES = {
    "LAGLAB_OUTPUT_DIR": ("paths.output_dir", str),
    "LAGLAB_SEED_FILE": ("paths.seed_file", str),
    "LAGLAB_LOG_LEVEL": ("app.log_level", str),
    "LAGLAB_DB_PATH": ("database.path", str),
    "LAGLAB_WORKERS": ("quadrature.workers", int),
}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class Config:
    """設定管理クラス"""

    def __init__(self, config_path: str = "config.json"):
        """
        初期化

        Args:
            config_path: 設定ファイルのパス
        """
        # 環境変数の読み込み（.env を含む）
        load_dotenv()

        self.config_path = config_path
        self.config = self._load_config()
        self._apply_env()

    def _load_config(self) -> Dict[str, Any]:
        """設定ファイルの読み込み"""
        defaults = self._get_default_config()
        if not os.path.exists(self.config_path):
            return defaults
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                return _merge(defaults, json.load(f))
        except json.JSONDecodeError as e:
            raise ConfigError(f"設定ファイル {self.config_path} を解釈できません: {e}") from e

    def _get_default_config(self) -> Dict[str, Any]:
        """デフォルト設定を取得"""
        return {
            "app": {
                "name": "laglab",
                "version": "1.0.0",
                "log_level": "WARNING"
            },
            "paths": {
                "output_dir": "output",
                "seed_file": "data/periodic_seeds.json"
            },
            "database": {
                "path": "data/runs.db",
                "enabled": True
            },
            "geometry": {
                "fd_step": 1e-3,
                "lagrangian_tol": 1e-6,
                "degenerate_tol": 1e-14
            },
            "ode": {
                "tol": 1e-8,
                "s_max": 60.0,
                "trust_radius": 0.05,
                "return_tol": 1e-2
            },
            "quadrature": {
                "r_panels": 8,
                "r_order": 8,
                "angle_nodes": 16,
                "s_nodes": 64,
                "workers": 1
            },
            "brakke": {
                "t0": 0.5,
                "levels": 10,
                "limit_tol": 0.02,
                "flow_tol": 0.01,
                "quad_tol": 1e-3
            }
        }

    def _apply_env(self):
        """LAGLAB_* 環境変数で上書き"""
        for name, (key, cast) in ENV_OVERRIDES.items():
            raw = os.getenv(name)
            if raw is None or raw == "":
                continue
            try:
                self.set(key, cast(raw))
            except ValueError:
                raise ConfigError(f"環境変数 {name}={raw!r} を解釈できません") from None

    def get(self, key: str, default: Any = None) -> Any:
        """
        設定値を取得

        Args:
            key: 設定キー（ドット記法で階層指定可能）
            default: デフォルト値

        Returns:
            設定値
        """
        keys = key.split('.')
        value = self.config

        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default

        return value

    def set(self, key: str, value: Any):
        """設定値を変更（ドット記法）"""
        keys = key.split('.')
        node = self.config
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value

    def get_seed_file(self) -> str:
        return self.get("paths.seed_file", "data/periodic_seeds.json")

    def get_output_dir(self) -> str:
        return self.get("paths.output_dir", "output")

    def save(self):
        """設定をファイルに保存"""
        with open(self.config_path, 'w', encoding='utf-8') as f:
            json.dump(self.config, f, indent=2, ensure_ascii=False)


@dataclass
class RunConfig:
    """
    1回の実行の設定

    JSON に保存したものを読み戻すと同じ値になる。
    phi_center は実座標 (x¹, y¹, x², y², …) で与え、空なら原点。
    """
    family: str = "integer"
    lambdas: List[float] = field(default_factory=lambda: [1.0, 1.0, -1.0])
    t_values: List[float] = field(default_factory=list)
    t0: float = 0.5
    levels: int = 10
    alpha: float = 1.0
    phi_radius: float = 1.0
    phi_amplitude: float = 1.0
    phi_center: List[float] = field(default_factory=list)
    r_panels: int = 8
    r_order: int = 8
    angle_nodes: int = 16
    s_nodes: int = 64
    samples: int = 1000
    tol: float = 1e-8
    limit_tol: float = 0.02
    flow_tol: float = 0.01
    quad_tol: float = 1e-3
    s_max: float = 60.0
    return_tol: float = 1e-2
    trust_radius: float = 0.05
    output_dir: str = "output"
    seed_file: str = "data/periodic_seeds.json"
    workers: int = 1
    random_seed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"不明な設定キー: {sorted(unknown)}")
        config = cls(**data)
        config.validate()
        return config

    @classmethod
    def from_config(cls, config: Config) -> "RunConfig":
        """Config の既定値から作る"""
        return cls(
            t0=config.get("brakke.t0", 0.5),
            levels=config.get("brakke.levels", 10),
            r_panels=config.get("quadrature.r_panels", 8),
            r_order=config.get("quadrature.r_order", 8),
            angle_nodes=config.get("quadrature.angle_nodes", 16),
            s_nodes=config.get("quadrature.s_nodes", 64),
            tol=config.get("ode.tol", 1e-8),
            s_max=config.get("ode.s_max", 60.0),
            return_tol=config.get("ode.return_tol", 1e-2),
            trust_radius=config.get("ode.trust_radius", 0.05),
            limit_tol=config.get("brakke.limit_tol", 0.02),
            flow_tol=config.get("brakke.flow_tol", 0.01),
            quad_tol=config.get("brakke.quad_tol", 1e-3),
            output_dir=config.get_output_dir(),
            seed_file=config.get_seed_file(),
            workers=config.get("quadrature.workers", 1),
        )

    def validate(self):
        """
        値の検査

        Raises:
            ConfigError: 不正な値、または参照ファイルが存在しない
        """
        if self.family not in ("integer", "ode"):
            raise ConfigError(f"family は integer か ode です: {self.family!r}")
        if self.family == "ode" and not os.path.exists(self.seed_file):
            raise ConfigError(f"周期初期値ファイルがありません: {self.seed_file}")
        if any(v == 0 for v in self.lambdas):
            raise ConfigError(f"λ に 0 は使えません: {self.lambdas}")
        if self.levels < 3:
            raise ConfigError("levels は3以上必要です（外挿に3点使います）")
        if self.phi_center and len(self.phi_center) != 2 * len(self.lambdas):
            raise ConfigError("phi_center は 2n 個の実座標で指定してください")
        if not min(self.s_max, self.return_tol, self.trust_radius) > 0:
            raise ConfigError("s_max・return_tol・trust_radius は正の値です")
        if not self.quad_tol > 0:
            raise ConfigError(f"quad_tol は正の値です: {self.quad_tol}")
        if self.workers < 1:
            raise ConfigError("workers は1以上です")

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"設定ファイル {path} を読めません: {e}") from e
        return cls.from_dict(data)

    def save(self, path: str):
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
