"""
微分幾何エンジン
ℂⁿ への任意のはめ込みチャートから接フレーム、誘導計量、シンプレクティック対、
ラグランジュ角、平均曲率、法射影を計算する。解析的ヤコビアンがあればそれを使い、
なければ4次中心差分で代用する。
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import (AngleUnwrapError, DegenerateFrameError,
                     NonLagrangianError, StepSizeError)

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3
MIN_STEP = 1e-7
DEGENERATE_TOL = 1e-14
LAGRANGIAN_TOL = 1e-6
UNWRAP_LIMIT = np.pi / 2

# 4次中心差分の係数（オフセット -2, -1, +1, +2）
_OFFSETS = (-2, -1, 1, 2)
_FIRST = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_SECOND = np.array([-1.0, 16.0, 16.0, -1.0]) / 12.0
_SECOND_CENTER = -30.0 / 12.0


@dataclass(frozen=True)
class Immersion:
    """
    はめ込みチャート u ↦ F(u) ∈ ℂᴺ

    Attributes:
        dim_domain: パラメータ数 n
        evaluate: u (n,) を受け取り複素ベクトル (N,) を返す
        derivative: 任意。u を受け取り列 ∂F/∂u_a を並べた (N, n) 複素行列を返す
        angle_hint: 任意。閉形式のラグランジュ角 θ(u)
        orientation: 任意。u での向き（±1）。-1 なら第1列を反転して向きを揃える
        lower, upper: 任意。パラメータ箱の下限・上限（無限大可）
        name: ログ用の名前
        batched: True なら evaluate・derivative・orientation は (M, n) の点列も受け取り、
            先頭に M 軸の付いた配列を返す。差分ステンシルは一度にまとめて評価する
    """
    dim_domain: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    angle_hint: Optional[Callable[[np.ndarray], float]] = None
    orientation: Optional[Callable[[np.ndarray], float]] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    name: str = "immersion"
    batched: bool = False


def as_batch(u) -> Tuple[np.ndarray, bool]:
    """u を (M, n) にそろえ、単点 (n,) だったかを返す"""
    u = np.asarray(u, dtype=float)
    return np.atleast_2d(u), u.ndim == 1


@dataclass(frozen=True)
class TangentFrame:
    """接フレーム。columns[:, a] = T_a = ∂F/∂u_a"""
    columns: np.ndarray

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    def real_columns(self) -> np.ndarray:
        """ℝ^{2N} の実ベクトルとして (x¹, y¹, x², y², …) 順に並べた列"""
        z = self.columns
        out = np.empty((2 * z.shape[0], z.shape[1]))
        out[0::2] = z.real
        out[1::2] = z.imag
        return out

    def metric(self) -> "MetricTensor":
        return MetricTensor(np.real(self.columns.conj().T @ self.columns))


@dataclass(frozen=True)
class MetricTensor:
    """誘導計量 g_ab"""
    entries: np.ndarray

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.entries))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.entries)


def _steps(u: np.ndarray, h: float) -> np.ndarray:
    """各座標の差分幅。チャート座標の大きさに比例させる"""
    if not h > MIN_STEP:
        raise StepSizeError(f"差分ステップ {h!r} が下限 {MIN_STEP} 以下です")
    return h * np.maximum(1.0, np.abs(u))


def _check_interior(imm: Immersion, u: np.ndarray, steps: np.ndarray):
    """ステンシル（±2h）がパラメータ箱に収まることを確認。u, steps は (n,) でも (M, n) でもよい"""
    if imm.lower is not None and np.any(u - 2 * steps < imm.lower):
        raise DegenerateFrameError(f"{imm.name}: u={u} がパラメータ箱の下端に近すぎます")
    if imm.upper is not None and np.any(u + 2 * steps > imm.upper):
        raise DegenerateFrameError(f"{imm.name}: u={u} がパラメータ箱の上端に近すぎます")


def _shift(u: np.ndarray, a: int, delta: float) -> np.ndarray:
    v = np.array(u, dtype=float)
    v[a] += delta
    return v


def _over_points(fn: Callable) -> Callable:
    """1点ずつの関数を (M, n) の点列に広げる"""
    return lambda points: np.stack([np.asarray(fn(p)) for p in points])


def _many(imm: Immersion, fn: Callable) -> Callable:
    return (lambda points: np.asarray(fn(points))) if imm.batched else _over_points(fn)


def _first_stencil(u: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """座標ごとに u + o·h_a e_a（o ∈ −2, −1, 1, 2）を並べた (4n, n)"""
    n = len(u)
    points = np.repeat(u[None, :], 4 * n, axis=0)
    for a in range(n):
        points[4 * a:4 * a + 4, a] += np.array(_OFFSETS) * steps[a]
    return points


def _first_from(values: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """_first_stencil 上の値から4次中心差分 (n, …)"""
    n = len(steps)
    v = np.asarray(values).reshape((n, 4) + np.shape(values)[1:])
    out = np.tensordot(_FIRST, v, axes=([0], [1]))
    return out / steps.reshape((n,) + (1,) * (out.ndim - 1))


def _central(batch: Callable, u: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """batch の全方向4次中心差分 (n, …)"""
    return _first_from(batch(_first_stencil(u, steps)), steps)


def _second_stencil(u: np.ndarray, steps: np.ndarray):
    """二階差分の点列と (a, o) / (a, b, o_a, o_b) → 行番号 の対応"""
    n = len(u)
    points, index = [], {}
    for a in range(n):
        for o in _OFFSETS:
            index[(a, o)] = len(points)
            points.append(_shift(u, a, o * steps[a]))
        for b in range(a + 1, n):
            for oi in _OFFSETS:
                for oj in _OFFSETS:
                    index[(a, b, oi, oj)] = len(points)
                    points.append(_shift(_shift(u, a, oi * steps[a]), b, oj * steps[b]))
    return np.array(points), index


def _hessian(batch: Callable, u: np.ndarray, steps: np.ndarray, center) -> np.ndarray:
    """
    二階微分を4次差分で計算

    Args:
        batch: (M, n) の点列を受け取り (M, …) を返す関数
        u: 評価点
        steps: 各座標の差分幅
        center: u での値

    Returns:
        形状 (n, n) + center.shape の配列
    """
    n = len(u)
    points, index = _second_stencil(u, steps)
    values = np.asarray(batch(points))
    f0 = np.asarray(center)
    hess = np.empty((n, n) + f0.shape, dtype=np.result_type(values, f0))
    for a in range(n):
        ha = steps[a]
        acc = _SECOND_CENTER * f0
        for c, o in zip(_SECOND, _OFFSETS):
            acc = acc + c * values[index[(a, o)]]
        hess[a, a] = acc / ha ** 2
        for b in range(a + 1, n):
            acc = 0.0
            for ci, oi in zip(_FIRST, _OFFSETS):
                for cj, oj in zip(_FIRST, _OFFSETS):
                    acc = acc + ci * cj * values[index[(a, b, oi, oj)]]
            hess[a, b] = hess[b, a] = acc / (ha * steps[b])
    return hess


def _frame_columns(imm: Immersion, u: np.ndarray, steps: np.ndarray,
                   analytic: bool = True) -> np.ndarray:
    if analytic and imm.derivative is not None:
        cols = np.array(imm.derivative(u), dtype=complex)
    else:
        cols = _central(_many(imm, imm.evaluate), u, steps).T.astype(complex)
    if imm.orientation is not None and imm.orientation(u) < 0:
        cols[:, 0] = -cols[:, 0]
    return cols


def tangent_frame(imm: Immersion, u, h: float = DEFAULT_STEP,
                  analytic: bool = True) -> TangentFrame:
    """
    接フレームを計算

    Args:
        imm: はめ込みチャート
        u: パラメータ点
        h: 差分ステップ（解析的ヤコビアンがない場合に使用）
        analytic: False なら解析的ヤコビアンがあっても差分で計算する

    Returns:
        TangentFrame

    Raises:
        DegenerateFrameError: Gram 行列式が閾値未満
    """
    u = np.asarray(u, dtype=float)
    steps = _steps(u, h)
    _check_interior(imm, u, steps)
    frame = TangentFrame(_frame_columns(imm, u, steps, analytic))
    det = frame.metric().determinant
    if not det >= DEGENERATE_TOL:
        raise DegenerateFrameError(f"{imm.name}: Gram 行列式 {det:.3e} (u={u})")
    return frame


def symplectic_pairing(frame: TangentFrame) -> np.ndarray:
    """M_ab = ω(T_a, T_b)。ω(a, b) = Im⟨a, b⟩_ℂ"""
    z = frame.columns
    return np.imag(z.conj().T @ z)


def lagrangian_angle(frame: TangentFrame, tol: float = LAGRANGIAN_TOL) -> float:
    """
    ラグランジュ角 θ = arg det Z を [0, 2π) で返す

    Raises:
        NonLagrangianError: max |ω(T_a, T_b)| が tol を超える
    """
    z = frame.columns
    if z.shape[0] != z.shape[1]:
        raise NonLagrangianError(f"フレームが正方ではありません: {z.shape}")
    residual = np.max(np.abs(symplectic_pairing(frame)))
    scale = max(1.0, float(np.max(np.abs(frame.metric().entries))))
    if residual > tol * scale:
        raise NonLagrangianError(f"シンプレクティック残差 {residual:.3e} > {tol:.1e}")
    return float(np.mod(np.angle(np.linalg.det(z)), 2 * np.pi))


def angle_at(imm: Immersion, u, h: float = DEFAULT_STEP) -> float:
    return lagrangian_angle(tangent_frame(imm, u, h))


def angles_at(imm: Immersion, points, h: float = DEFAULT_STEP) -> np.ndarray:
    """
    点列 (M, n) でのラグランジュ角

    batched で解析的ヤコビアンがあれば、フレーム・Gram 行列式・シンプレクティック残差を一括で計算する。
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not imm.batched or imm.derivative is None:
        return np.array([angle_at(imm, p, h) for p in points])
    _check_interior(imm, points, _steps(points, h))
    cols = np.array(imm.derivative(points), dtype=complex)
    if imm.orientation is not None:
        flip = np.asarray(imm.orientation(points)) < 0
        cols[flip, :, 0] *= -1
    inner = np.conj(cols).transpose(0, 2, 1) @ cols
    gram = np.real(inner)
    det = np.linalg.det(gram)
    bad = ~(det >= DEGENERATE_TOL)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DegenerateFrameError(f"{imm.name}: Gram 行列式 {det[i]:.3e} (u={points[i]})")
    if cols.shape[1] != cols.shape[2]:
        raise NonLagrangianError(f"フレームが正方ではありません: {cols.shape[1:]}")
    residual = np.max(np.abs(np.imag(inner)), axis=(1, 2))
    scale = np.maximum(1.0, np.max(np.abs(gram), axis=(1, 2)))
    if np.any(residual > LAGRANGIAN_TOL * scale):
        raise NonLagrangianError(f"シンプレクティック残差 {np.max(residual):.3e} > {LAGRANGIAN_TOL:.1e}")
    return np.mod(np.angle(np.linalg.det(cols)), 2 * np.pi)


def _unwrapped_angle(imm: Immersion, u: np.ndarray, h: float):
    """中心値 θ(u) の枝に合わせて点列での角を返す関数を作る"""
    theta0 = angle_at(imm, u, h)

    def batch(points):
        delta = np.mod(angles_at(imm, points, h) - theta0 + np.pi, 2 * np.pi) - np.pi
        if np.any(np.abs(delta) > UNWRAP_LIMIT):
            raise AngleUnwrapError(
                f"{imm.name}: 差分ステップで θ が {float(np.max(np.abs(delta))):.3f} 跳びました")
        return theta0 + delta

    return theta0, batch


def angle_gradient(imm: Immersion, u, h: float = DEFAULT_STEP) -> np.ndarray:
    """座標微分 ∂_a θ"""
    u = np.asarray(u, dtype=float)
    steps = _steps(u, h)
    _, batch = _unwrapped_angle(imm, u, h)
    return _central(batch, u, steps)


def mean_curvature(imm: Immersion, u, h: float = DEFAULT_STEP) -> np.ndarray:
    """H = J∇θ、∇θ = g^{ab}(∂_b θ) T_a"""
    u = np.asarray(u, dtype=float)
    frame = tangent_frame(imm, u, h)
    dtheta = angle_gradient(imm, u, h)
    grad = frame.columns @ (frame.metric().inverse() @ dtheta)
    return 1j * grad


def _position_hessian(imm: Immersion, u: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """∂_a∂_b F。解析的ヤコビアンがあればその1階差分、なければ F の2階差分"""
    if imm.derivative is None:
        return _hessian(_many(imm, imm.evaluate), u, steps, imm.evaluate(u))
    hess = _central(_many(imm, imm.derivative), u, steps).transpose(0, 2, 1)
    return 0.5 * (hess + hess.transpose(1, 0, 2))


def _normal_part(frame: TangentFrame, ginv: np.ndarray, v: np.ndarray) -> np.ndarray:
    z = frame.columns
    coeff = ginv @ np.real(z.conj().T @ v)
    return v - z @ coeff


def laplace_beltrami_of_position(imm: Immersion, u, h: float = DEFAULT_STEP) -> np.ndarray:
    """
    Δ_L F = g^{ab}(∂_a∂_b F − Γ^c_ab ∂_c F)

    はめ込みでは Γ^c_ab ∂_c F はヘッシアンの接成分なので、
    ヘッシアンの法成分を計量で縮約すればよい。
    """
    u = np.asarray(u, dtype=float)
    steps = _steps(u, h)
    frame = tangent_frame(imm, u, h)
    ginv = frame.metric().inverse()
    hess = _position_hessian(imm, u, steps)
    n = len(u)
    total = np.zeros(frame.columns.shape[0], dtype=complex)
    for a in range(n):
        for b in range(n):
            total += ginv[a, b] * _normal_part(frame, ginv, hess[a, b])
    return total


def normal_projection(imm: Immersion, u, h: float = DEFAULT_STEP) -> np.ndarray:
    """F⊥ = F − g^{ab}⟨F, T_a⟩T_b"""
    u = np.asarray(u, dtype=float)
    frame = tangent_frame(imm, u, h)
    point = np.asarray(imm.evaluate(u), dtype=complex)
    return _normal_part(frame, frame.metric().inverse(), point)


def angle_laplacian(imm: Immersion, u, h: float = DEFAULT_STEP) -> float:
    """Δ_L θ = g^{ab}(∂_a∂_b θ − Γ^c_ab ∂_c θ)"""
    u = np.asarray(u, dtype=float)
    steps = _steps(u, h)
    frame = tangent_frame(imm, u, h)
    ginv = frame.metric().inverse()
    theta0, batch = _unwrapped_angle(imm, u, h)
    dtheta = _central(batch, u, steps)
    theta_hess = _hessian(batch, u, steps, theta0)
    pos_hess = _position_hessian(imm, u, steps)
    z = frame.columns
    total = 0.0
    for a in range(len(u)):
        for b in range(len(u)):
            christoffel = ginv @ np.real(z.conj().T @ pos_hess[a, b])
            total += ginv[a, b] * (theta_hess[a, b] - christoffel @ dtheta)
    return float(total)
