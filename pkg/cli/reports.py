"""
レポート出力モジュール
CSV / JSON / OBJ メッシュ / 点群 CSV を書き出す。同じ入力からは同じバイト列を出力する。
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

import numpy as np

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
CSV_HEADER = "t,mass,variation,error_estimate,grid"


def _fmt(value: float) -> str:
    return f"{value:.12e}"


def _ensure_parent(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_records_csv(path: str, records: Iterable[Dict]) -> str:
    """
    t, mass, variation, error_estimate, grid の表を書く

    Args:
        path: 出力先
        records: FunctionalReport.to_dict() 相当の辞書の列
    """
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        for r in records:
            f.write(",".join([_fmt(r["t"]), _fmt(r["mass"]), _fmt(r["variation"]),
                              _fmt(r["error_estimate"]), r["grid"]]) + "\n")
    logger.info("CSV を書き出しました: %s", path)
    return path


def _plain(value):
    """numpy の値を JSON 化できる型へ"""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def write_json(path: str, kind: str, payload: Dict) -> str:
    """schema_version 付きの JSON を書く（タイムスタンプは入れない）"""
    _ensure_parent(path)
    document = {"schema_version": SCHEMA_VERSION, "kind": kind}
    document.update(_plain(payload))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(document, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    logger.info("JSON を書き出しました: %s", path)
    return path


# --- メッシュ ------------------------------------------------------------------

def real_coordinates(points: np.ndarray) -> np.ndarray:
    """ℂⁿ の点 (N, n) を (x¹, y¹, x², y², …) 順の実座標 (N, 2n) にする"""
    points = np.atleast_2d(points)
    out = np.empty((points.shape[0], 2 * points.shape[1]))
    out[:, 0::2] = points.real
    out[:, 1::2] = points.imag
    return out


def default_projection(n: int) -> np.ndarray:
    """先頭3つの実座標を取り出す 3 × 2n 行列"""
    matrix = np.zeros((3, 2 * n))
    for i in range(min(3, 2 * n)):
        matrix[i, i] = 1.0
    return matrix


def load_projection(path: str, n: int) -> np.ndarray:
    matrix = np.atleast_2d(np.loadtxt(path, delimiter=","))
    if matrix.shape != (3, 2 * n):
        raise ValueError(f"射影行列は 3 × {2 * n} である必要があります: {matrix.shape}")
    return matrix


@dataclass(frozen=True)
class MeshFile:
    """四角形面のメッシュ"""
    vertices: np.ndarray
    faces: np.ndarray

    def validate(self):
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("頂点に NaN/inf が含まれています")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("面の頂点番号が範囲外です")


def grid_mesh(points: np.ndarray, projection: Optional[np.ndarray] = None) -> MeshFile:
    """
    パラメータ格子上の点 (R, S, n) から四角形メッシュを作る

    Returns:
        頂点 R·S 個、面 (R−1)(S−1) 個の MeshFile
    """
    rows, cols, n = points.shape
    matrix = default_projection(n) if projection is None else projection
    vertices = real_coordinates(points.reshape(rows * cols, n)) @ matrix.T

    def idx(i, j):
        return i * cols + j

    faces = [[idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]
             for i in range(rows - 1) for j in range(cols - 1)]
    mesh = MeshFile(vertices, np.asarray(faces, dtype=np.int64).reshape(-1, 4))
    mesh.validate()
    return mesh


def write_obj(path: str, mesh: MeshFile, group_name: Optional[str] = None) -> str:
    """"v" / "f" レコードの OBJ を書く（面番号は1始まり）"""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if group_name:
            f.write(f"g {group_name}\n")
        for x, y, z in mesh.vertices:
            f.write(f"v {x:.9f} {y:.9f} {z:.9f}\n")
        for face in mesh.faces:
            f.write("f " + " ".join(str(i + 1) for i in face) + "\n")
    logger.info("OBJ を書き出しました: %s (%d 頂点, %d 面)", path, len(mesh.vertices), len(mesh.faces))
    return path


def write_point_cloud(path: str, points: np.ndarray) -> str:
    """全実座標の点群 CSV（gnuplot 等でそのまま読める）"""
    coords = real_coordinates(points)
    n = coords.shape[1] // 2
    header = ",".join(f"{axis}{j + 1}" for j in range(n) for axis in ("x", "y"))
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        for row in coords:
            f.write(",".join(f"{v:.9f}" for v in row) + "\n")
    return path


# --- テキスト表示 ----------------------------------------------------------------

@dataclass
class CheckRecord:
    """不変量チェックの1行"""
    name: str
    measured: float
    limit: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name}: {self.measured:.3e} (limit {self.limit:.1e})"
        return f"{text} {self.detail}" if self.detail else text

    def to_dict(self) -> Dict:
        return {"name": self.name, "measured": self.measured, "limit": self.limit,
                "passed": self.passed, "detail": self.detail}


def format_table(records: Iterable[Dict]) -> List[str]:
    lines = [f"{'t':>14} {'mass':>20} {'variation':>20} {'error':>10}"]
    for r in records:
        lines.append(f"{r['t']:>14.6g} {r['mass']:>20.12g} {r['variation']:>20.12g} {r['error_estimate']:>10.2e}")
    return lines
