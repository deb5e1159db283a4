"""
ODE 族モジュール
w_j' = λ_j e^{iθ} conj(∏_{m≠j} w_m)、θ' = α Im(e^{−iθ} w_1⋯w_n) の積分、周期軌道の探索、
周期軌道から作る V_t = {(x_j w_j(s))}、Σλ_j x_j² = 2t の閉形式密度を扱う。
"""
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, least_squares, minimize_scalar

from .errors import (ModulusCollapseError, NoReturnError, RefinementError,
                     SliceError, StepSizeError)
from .geometry import Immersion, as_batch
from .integer_family import LambdaSpec, gcd_all
from .quadric import Quadric

logger = logging.getLogger(__name__)

MODULUS_FLOOR = 1e-9
DRIFT_LIMIT = 1e-8
DEFAULT_S_MAX = 60.0
PAD_FRACTION = 0.05
SAMPLES_PER_UNIT = 200


@dataclass(frozen=True)
class OdeParams:
    """λ（正の成分が先頭）と α"""
    lambdas: Tuple[float, ...]
    alpha: float = 1.0

    def __post_init__(self):
        # 符号パターンの検査は LambdaSpec に任せる
        spec = LambdaSpec(tuple(self.lambdas), strict_integer=False)
        object.__setattr__(self, "lambdas", spec.lambdas)
        if self.alpha == 0:
            raise ValueError("α = 0 では θ が定数になり族になりません")

    @property
    def array(self) -> np.ndarray:
        return np.array(self.lambdas)

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @property
    def k(self) -> int:
        return sum(1 for v in self.lambdas if v > 0)

    @property
    def unit_normalized(self) -> bool:
        """密度の上界評価で使う正規化 |λ_j| ≥ 1"""
        return all(abs(v) >= 1 for v in self.lambdas)


@dataclass(frozen=True)
class OdeState:
    """状態 (w, θ)"""
    w: Tuple[complex, ...]
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(complex(v) for v in self.w))
        object.__setattr__(self, "theta", float(self.theta))
        if min(abs(v) for v in self.w) < MODULUS_FLOOR:
            raise ModulusCollapseError(f"|w_j| が下限 {MODULUS_FLOOR} を割っています: {self.w}")

    def to_vector(self) -> np.ndarray:
        w = np.array(self.w)
        return np.concatenate([w.real, w.imag, [self.theta]])

    @classmethod
    def from_vector(cls, y) -> "OdeState":
        n = (len(y) - 1) // 2
        return cls(tuple(y[:n] + 1j * y[n:2 * n]), float(y[-1]))


def _wrap(angle):
    return np.mod(np.asarray(angle) + np.pi, 2 * np.pi) - np.pi


def _difference(y, y0) -> np.ndarray:
    """状態ベクトルの差（θ は円周上で比較）"""
    y = np.array(y, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    d = y - (y0[:, None] if y.ndim == 2 else y0)
    d[-1] = _wrap(d[-1])
    return d


def _unpack(y: np.ndarray, n: int):
    """(2n+1, N) または (2n+1,) の状態ベクトルを (w, θ) に分ける"""
    return y[:n] + 1j * y[n:2 * n], y[-1]


def rhs_batch(params: OdeParams, w: np.ndarray, theta: np.ndarray):
    """
    右辺を N 個の状態で一括評価

    Args:
        w: (N, n) 複素
        theta: (N,)

    Returns:
        (dw (N, n), dθ (N,))
    """
    lam = params.array
    prod = np.prod(w, axis=1)
    others = np.conj(prod[:, None] / w)
    phase = np.exp(1j * np.asarray(theta))
    dw = lam * phase[:, None] * others
    dtheta = params.alpha * np.imag(np.conj(phase) * prod)
    return dw, dtheta


def rhs(params: OdeParams, state: OdeState) -> Tuple[np.ndarray, float]:
    """d(w, θ)/ds"""
    dw, dtheta = rhs_batch(params, np.array([state.w]), np.array([state.theta]))
    return dw[0], float(dtheta[0])


def _vector_field(params: OdeParams):
    n = params.n

    def fun(s, y):
        w, theta = _unpack(y, n)
        dw, dtheta = rhs_batch(params, w[None, :], np.array([theta]))
        return np.concatenate([dw[0].real, dw[0].imag, dtheta])

    return fun


def conserved_quantities(params: OdeParams, w: np.ndarray) -> np.ndarray:
    """Q_j = |w_j|²/λ_j − |w_1|²/λ_1（j ≥ 2）。w は (N, n)"""
    ratio = np.abs(np.atleast_2d(w)) ** 2 / params.array
    return ratio[:, 1:] - ratio[:, :1]


def first_integral(params: OdeParams, w: np.ndarray, theta: np.ndarray, w0) -> np.ndarray:
    """
    Im(e^{−iθ}∏w)·exp(αq/2)。q は |w_j|² = |w_j(0)|² + λ_j q で定める
    """
    w = np.atleast_2d(w)
    q = (np.abs(w[:, 0]) ** 2 - abs(w0[0]) ** 2) / params.lambdas[0]
    prod = np.prod(w, axis=1)
    return np.imag(np.exp(-1j * np.asarray(theta)) * prod) * np.exp(params.alpha * q / 2)


@dataclass(frozen=True)
class Trajectory:
    """積分結果。dense は scipy の OdeSolution（s_end = 0 なら None）"""
    params: OdeParams
    initial: OdeState
    s_end: float
    s: np.ndarray
    y: np.ndarray
    dense: Optional[object] = None
    q_drift: float = 0.0
    integral_drift: float = 0.0

    def vectors(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.dense is None:
            return np.repeat(self.initial.to_vector()[:, None], len(s), axis=1)
        return self.dense(s)

    def state_at(self, s: float) -> OdeState:
        return OdeState.from_vector(self.vectors([s])[:, 0])

    @property
    def end_state(self) -> OdeState:
        return OdeState.from_vector(self.y[:, -1])


def integrate(params: OdeParams, initial: OdeState, s_end: float, tol: float = 1e-10,
              max_step: float = np.inf) -> Trajectory:
    """
    DOP853（Dormand–Prince 8(5,3)）で積分し、密出力を返す

    Args:
        params: パラメータ
        initial: 初期状態
        s_end: 積分終端（負なら逆向き）
        tol: rtol = atol = tol

    Raises:
        ModulusCollapseError: |w_j| が下限を割った
        StepSizeError: ステップ幅が下限を割った
    """
    if not tol > 0:
        raise ValueError(f"tol は正である必要があります: {tol}")
    y0 = initial.to_vector()
    if s_end == 0:
        return Trajectory(params, initial, 0.0, np.zeros(1), y0[:, None])

    n = params.n

    def collapse(s, y):
        w, _ = _unpack(y, n)
        return float(np.min(np.abs(w))) - MODULUS_FLOOR

    collapse.terminal = True
    collapse.direction = -1

    sol = solve_ivp(_vector_field(params), (0.0, float(s_end)), y0, method="DOP853",
                    rtol=tol, atol=tol, dense_output=True, events=collapse,
                    max_step=max_step)
    if sol.status == 1 and len(sol.t_events[0]):
        raise ModulusCollapseError(f"s={sol.t_events[0][0]:.6g} で |w_j| が {MODULUS_FLOOR} を割りました")
    if sol.status == -1:
        raise StepSizeError(f"積分が s={sol.t[-1]:.6g} で停止しました: {sol.message}")

    w, theta = _unpack(sol.y, n)
    q = conserved_quantities(params, w.T)
    q_drift = float(np.max(np.abs(q - q[:1]))) if q.size else 0.0
    integral = first_integral(params, w.T, theta, initial.w)
    integral_drift = float(np.max(np.abs(integral - integral[0])))
    if q_drift > DRIFT_LIMIT * max(1.0, abs(s_end)):
        logger.warning("保存量 Q_j のドリフト %.3e (s ∈ [0, %g])", q_drift, s_end)
    return Trajectory(params, initial, float(s_end), sol.t, sol.y, sol.sol, q_drift, integral_drift)


# --- 周期軌道 ----------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicOrbit:
    """
    周期軌道

    [−pad, T+pad] の密出力を保持し、チャートの差分ステンシルが s = 0 をまたげるようにする。
    """
    params: OdeParams
    initial: OdeState
    period: float
    forward: Trajectory
    backward: Trajectory
    closure_residual: float
    r_min: np.ndarray
    r_max: np.ndarray

    @property
    def pad(self) -> float:
        return -self.backward.s_end

    def vectors(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        outside = (s < -self.pad) | (s > self.period + self.pad)
        s = np.where(outside, np.mod(s, self.period), s)
        out = np.empty((2 * self.params.n + 1, len(s)))
        neg = s < 0
        if np.any(neg):
            out[:, neg] = self.backward.vectors(s[neg])
        if np.any(~neg):
            out[:, ~neg] = self.forward.vectors(s[~neg])
        return out

    def state_vectors(self, s):
        """(w (N, n), θ (N,))"""
        w, theta = _unpack(self.vectors(s), self.params.n)
        return w.T, theta

    def state_at(self, s: float) -> OdeState:
        return OdeState.from_vector(self.vectors([s])[:, 0])

    def samples(self, count: int = 256) -> List[Tuple[float, OdeState]]:
        grid = np.linspace(0.0, self.period, count, endpoint=False)
        return [(float(s), OdeState.from_vector(v)) for s, v in zip(grid, self.vectors(grid).T)]

    def closure(self) -> float:
        return float(np.linalg.norm(_difference(self.forward.vectors([self.period])[:, 0],
                                                self.initial.to_vector())))


def _distance_profile(traj: Trajectory, y0: np.ndarray, grid: np.ndarray) -> np.ndarray:
    return np.linalg.norm(_difference(traj.vectors(grid), y0), axis=0)


def _closure_at(traj: Trajectory, y0: np.ndarray, s: float) -> float:
    return float(np.linalg.norm(_difference(traj.vectors([s])[:, 0], y0)))


def _refine_period(traj: Trajectory, y0: np.ndarray, a: float, b: float) -> float:
    """½|Δ(s)|² の臨界点 Re⟨Δ, f⟩ = 0 を根探索する"""
    fun = _vector_field(traj.params)

    def slope(s):
        y = traj.vectors([s])[:, 0]
        return float(np.dot(_difference(y, y0), fun(s, y)))

    if slope(a) * slope(b) < 0:
        return float(brentq(slope, a, b, xtol=1e-14, rtol=1e-14))
    res = minimize_scalar(lambda s: _closure_at(traj, y0, s), bounds=(a, b),
                          method="bounded", options={"xatol": 1e-12})
    return float(res.x)


def _shoot(params: OdeParams, seed: OdeState, period: float, tol: float,
           trust_radius: float, int_tol: float) -> Tuple[OdeState, float, float]:
    """
    初期状態と周期を信頼半径内で動かして閉じ残差を最小化する

    Returns:
        (新しい初期状態, 周期, 閉じ残差)
    """
    y0 = seed.to_vector()
    dim = len(y0)

    def residual(z):
        start = y0 + z[:dim]
        end = integrate(params, OdeState.from_vector(start), period + z[dim], int_tol)
        return _difference(end.y[:, -1], start)

    bound = np.concatenate([np.full(dim, trust_radius), [trust_radius * period]])
    try:
        result = least_squares(residual, np.zeros(dim + 1), bounds=(-bound, bound),
                               xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
    except (ModulusCollapseError, StepSizeError) as e:
        raise RefinementError(f"シューティング中に積分が失敗しました: {e}") from e
    z = result.x
    closure = float(np.linalg.norm(result.fun))
    logger.debug("シューティング: |δy|=%.3e δT=%.3e 残差=%.3e", np.linalg.norm(z[:dim]), z[dim], closure)
    return OdeState.from_vector(y0 + z[:dim]), period + float(z[dim]), closure


def build_orbit(params: OdeParams, initial: OdeState, period: float, tol: float = 1e-11,
                closure_residual: Optional[float] = None) -> PeriodicOrbit:
    """周期 T が分かっている初期状態から PeriodicOrbit を作る（r_j の上下界も検査する）"""
    pad = PAD_FRACTION * period
    forward = integrate(params, initial, period + pad, tol)
    backward = integrate(params, initial, -pad, tol)
    y0 = initial.to_vector()
    if closure_residual is None:
        closure_residual = _closure_at(forward, y0, period)
    w, _ = _unpack(forward.vectors(np.linspace(0.0, period, 1024)), params.n)
    moduli = np.abs(w)
    r_min, r_max = moduli.min(axis=1), moduli.max(axis=1)
    if not (np.all(r_min > MODULUS_FLOOR) and np.all(np.isfinite(r_max))):
        raise ModulusCollapseError(f"r_j の上下界が正の有限値になりません: {r_min}, {r_max}")
    return PeriodicOrbit(params, initial, float(period), forward, backward,
                         float(closure_residual), r_min, r_max)


def _first_return(grid: np.ndarray, dist: np.ndarray, return_tol: float) -> int:
    away = np.nonzero(dist > 2 * return_tol)[0]
    if not len(away):
        raise NoReturnError("軌道が初期状態の近傍から離れません（平衡点の可能性）")
    for i in range(away[0] + 1, len(grid) - 1):
        if dist[i] < return_tol and dist[i] <= dist[i - 1] and dist[i] <= dist[i + 1]:
            return i
    raise NoReturnError(f"s ≤ {grid[-1]:g} で回帰が見つかりません（最小距離 {dist[away[0]:].min():.3e}）")


def _return_near(grid: np.ndarray, dist: np.ndarray, hint: float, return_tol: float) -> Optional[int]:
    """周期の目安 ±10% の窓で最も近づく点（窓の端なら None）"""
    inside = np.nonzero((grid >= 0.9 * hint) & (grid <= 1.1 * hint))[0]
    if len(inside) < 3:
        return None
    i = int(inside[np.argmin(dist[inside])])
    if dist[i] >= return_tol or i in (inside[0], inside[-1]):
        return None
    return i


def find_periodic(params: OdeParams, seed: OdeState, tol: float = 1e-8,
                  s_max: Optional[float] = None, return_tol: float = 1e-2,
                  trust_radius: float = 0.05, period_hint: Optional[float] = None) -> PeriodicOrbit:
    """
    seed からの回帰を検出し、周期を精密化する

    period_hint があればまずその ±10% で回帰を探し、なければ最初の回帰を使う。

    Args:
        params: パラメータ
        seed: 周期軌道に近い初期状態
        tol: 受理する閉じ残差
        s_max: 回帰を探す範囲
        return_tol: 回帰候補とみなす距離
        trust_radius: シューティングで初期状態を動かせる範囲
        period_hint: 周期の目安（s_max の既定値にも使う）

    Raises:
        NoReturnError: s ≤ s_max に回帰がない
        RefinementError: 精密化・シューティングが収束しない
    """
    int_tol = max(tol * 1e-3, 1e-13)
    if s_max is None:
        s_max = 1.5 * period_hint if period_hint else DEFAULT_S_MAX
    traj = integrate(params, seed, s_max, int_tol)
    y0 = seed.to_vector()
    grid = np.linspace(0.0, s_max, int(s_max * SAMPLES_PER_UNIT) + 1)
    dist = _distance_profile(traj, y0, grid)

    hit = _return_near(grid, dist, period_hint, return_tol) if period_hint else None
    if hit is None:
        hit = _first_return(grid, dist, return_tol)

    period = _refine_period(traj, y0, grid[hit - 1], grid[hit + 1])
    residual = _closure_at(traj, y0, period)
    if residual > tol:
        logger.info("回帰残差 %.3e > %.1e のためシューティングします", residual, tol)
        seed, period, residual = _shoot(params, seed, period, tol, trust_radius, int_tol)
        if residual > tol:
            raise RefinementError(f"閉じ残差 {residual:.3e} が {tol:.1e} まで下がりません")

    y0 = seed.to_vector()
    check = integrate(params, seed, period, int_tol)
    while period > 1e-6 and _closure_at(check, y0, period / 2) < 10 * tol:
        period /= 2
    orbit = build_orbit(params, seed, period, int_tol, residual)
    logger.info("周期軌道: λ=%s T=%.10g 残差=%.3e", params.lambdas, period, residual)
    return orbit


# --- 非剛体の周期軌道の探索 --------------------------------------------------------
#
# w_j = r_j e^{iψ_j}、β = Σψ_j − θ、ρ = ∏r_j とおくと
#   (r_j²)' = 2λ_jρ cos β、ψ_j' = −λ_jρ sin β/r_j²、β' = −ρ sin β·G、G = Σλ_j/r_j² + α
# となり、(|w_j|, β) は閉じた2次元の系になる。その1周期で ψ_j が Δ_j 進むとき、
# Δ_j/m_j が j によらず、ν = Δ_1/(2πm_1) = K/N なら N 周期で全体が閉じる。

RIGID_SPREAD = 1e-3


@dataclass(frozen=True)
class ReducedPeriod:
    """
    折り返し点（w_j = r_j 実、θ = π/2）からの (|w_j|, β) の1周期

    advances は1周期での arg w_j の増分。
    """
    moduli: Tuple[float, ...]
    period: float
    advances: Tuple[float, ...]

    def rotation(self, winding: Sequence[int]) -> float:
        """ν = Δ_1/(2π m_1)"""
        return self.advances[0] / (2 * math.pi * winding[0])


def turning_state(moduli: Sequence[float]) -> OdeState:
    return OdeState(tuple(complex(r) for r in moduli), math.pi / 2)


def balance(params: OdeParams, moduli: Sequence[float]) -> float:
    """G = Σλ_j/r_j² + α。剛体解で 0"""
    return float(np.sum(params.array / np.asarray(moduli, dtype=float) ** 2) + params.alpha)


def linear_frequency(params: OdeParams, moduli: Sequence[float]) -> float:
    """剛体解のまわりの (|w_j|, β) の線形化振動数 ω_0 = √(2ρ²Σλ_j²/r_j⁴)"""
    r = np.asarray(moduli, dtype=float)
    return float(np.prod(r) * math.sqrt(2.0 * float(np.sum(params.array ** 2 / r ** 4))))


def winding_numbers(params: OdeParams, moduli: Sequence[float],
                    max_denominator: int = 64) -> Tuple[int, ...]:
    """剛体解の |w_j| から回転の速さの比 λ_j/r_j² を既約な整数比 m_j に直す"""
    rates = params.array / np.asarray(moduli, dtype=float) ** 2
    fractions = [Fraction(float(v / rates[0])).limit_denominator(max_denominator) for v in rates]
    scale = int(np.lcm.reduce([f.denominator for f in fractions]))
    m = [int(f * scale) for f in fractions]
    g = gcd_all(m)
    return tuple(v // g for v in m)


def reduced_period(params: OdeParams, moduli: Sequence[float], tol: float = 1e-11,
                   samples: int = 512) -> ReducedPeriod:
    """
    折り返し点から (|w_j|, β) が戻るまでを積分する

    ρ cos β = Re(e^{iθ}conj(∏w)) は折り返し点で 0 になり、1周期後に同じ向きで 0 を横切る。

    Raises:
        NoReturnError: 剛体解そのもの、または 4·2π/ω_0 以内に戻らない
        ModulusCollapseError: |w_j| が下限を割った
    """
    g0 = balance(params, moduli)
    if abs(g0) < 1e-14:
        raise NoReturnError("折り返し点が剛体解です")
    estimate = 2 * math.pi / linear_frequency(params, moduli)
    n = params.n

    def crossing(s, y):
        w, theta = _unpack(y, n)
        return float(np.real(np.exp(1j * theta) * np.conj(np.prod(w))))

    def collapse(s, y):
        w, _ = _unpack(y, n)
        return float(np.min(np.abs(w))) - MODULUS_FLOOR

    crossing.direction = 1.0 if g0 > 0 else -1.0
    collapse.terminal = True
    collapse.direction = -1

    sol = solve_ivp(_vector_field(params), (0.0, 4.0 * estimate), turning_state(moduli).to_vector(),
                    method="DOP853", rtol=tol, atol=tol, dense_output=True, events=[crossing, collapse])
    if len(sol.t_events[1]):
        raise ModulusCollapseError(f"s={sol.t_events[1][0]:.6g} で |w_j| が {MODULUS_FLOOR} を割りました")
    if sol.status == -1:
        raise StepSizeError(f"積分が s={sol.t[-1]:.6g} で停止しました: {sol.message}")
    returns = [s for s in sol.t_events[0] if s > 0.5 * estimate]
    if not returns:
        raise NoReturnError(f"s ≤ {4.0 * estimate:.6g} で折り返し点に戻りません")
    period = float(returns[0])
    w, _ = _unpack(sol.sol(np.linspace(0.0, period, samples)), n)
    phases = np.unwrap(np.angle(w), axis=1)
    return ReducedPeriod(tuple(float(r) for r in moduli), period,
                         tuple(float(v) for v in phases[:, -1] - phases[:, 0]))


def solve_moduli(params: OdeParams, winding: Sequence[int], target: float,
                 start: Sequence[float], tol: float = 1e-11) -> ReducedPeriod:
    """
    G(r) = target かつ Δ_j/m_j が j によらない折り返し点の |w_j| を求める

    Raises:
        RefinementError: 残差が下がらない
    """
    m = np.asarray(winding, dtype=float)

    def residual(log_r):
        r = np.exp(log_r)
        ratios = np.asarray(reduced_period(params, r, tol).advances) / m
        return np.concatenate([[balance(params, r) - target], ratios[1:] - ratios[0]])

    result = least_squares(residual, np.log(np.asarray(start, dtype=float)), diff_step=1e-6,
                           xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=100)
    if float(np.linalg.norm(result.fun)) > 1e-8:
        raise RefinementError(f"折り返し点の残差 {np.linalg.norm(result.fun):.3e} が下がりません")
    return reduced_period(params, np.exp(result.x), tol)


def _rationals_between(a: float, b: float, max_denominator: int) -> List[Fraction]:
    lo, hi = min(a, b), max(a, b)
    found = set()
    for den in range(1, max_denominator + 1):
        for num in range(math.floor(lo * den) + 1, math.ceil(hi * den)):
            found.add(Fraction(num, den))
    return sorted((f for f in found if lo < f < hi), key=lambda f: (f.denominator, f))


@dataclass(frozen=True)
class ScanPoint:
    amplitude: float
    target: float
    reduced: ReducedPeriod
    rotation: float


def shifted_moduli(params: OdeParams, rigid: Sequence[float], eps: float) -> np.ndarray:
    """r_j² + λ_jδ の平方根、δ = ε·min(r_j²/|λ_j|)"""
    rigid = np.asarray(rigid, dtype=float)
    unit = float(np.min(rigid ** 2 / np.abs(params.array)))
    return np.sqrt(rigid ** 2 + params.array * eps * unit)


def scan_rotation(params: OdeParams, rigid: Sequence[float], winding: Sequence[int],
                  amplitudes: Sequence[float], tol: float = 1e-11) -> List[ScanPoint]:
    """
    剛体解から振幅 ε ごとに折り返し点を解き、回転数 ν(ε) を並べる

    G を shifted_moduli(ε) での値に固定して解く。解けない ε は読み飛ばす。
    """
    points: List[ScanPoint] = []
    for eps in sorted(amplitudes):
        shifted = shifted_moduli(params, rigid, eps)
        target = balance(params, shifted)
        start = points[-1].reduced.moduli if points else shifted
        try:
            reduced = solve_moduli(params, winding, target, start, tol)
        except (NoReturnError, RefinementError, ModulusCollapseError, StepSizeError) as e:
            logger.debug("ε=%g: %s", eps, e)
            continue
        points.append(ScanPoint(float(eps), target, reduced, reduced.rotation(winding)))
        logger.debug("ε=%g: ν=%.10f T=%.8g", eps, points[-1].rotation, reduced.period)
    return points


def search_periodic(params: OdeParams, base: OdeState, amplitudes: Sequence[float],
                    tol: float = 1e-8, max_denominator: int = 40, max_orbits: int = 4,
                    trust_radius: float = 0.05) -> List[PeriodicOrbit]:
    """
    剛体解 base から分岐する非剛体の周期軌道を探す

    振幅を走査して ν(ε) を求め、隣り合う ε の間にある分母 max_denominator 以下の有理数 K/N ごとに
    ν(ε) = K/N を brentq で解く。周期は N 倍の簡約周期で、閉じ残差が tol を超えればシューティングする。
    |w_j| がほとんど動かない軌道は捨てる。

    Raises:
        ValueError: base が剛体解でない
    """
    rigid = np.abs(np.asarray(base.w))
    if abs(balance(params, rigid)) > 1e-6:
        raise ValueError("探索の起点は剛体解（Σλ_j/|w_j|² = −α）である必要があります")
    winding = winding_numbers(params, rigid)
    int_tol = max(tol * 1e-3, 1e-13)
    points = scan_rotation(params, rigid, winding, amplitudes, int_tol)

    found: List[PeriodicOrbit] = []
    for a, b in zip(points, points[1:]):
        last = {"moduli": a.reduced.moduli, "reduced": a.reduced}

        def offset(eps, nu):
            target = balance(params, shifted_moduli(params, rigid, eps))
            reduced = solve_moduli(params, winding, target, last["moduli"], int_tol)
            last["moduli"], last["reduced"] = reduced.moduli, reduced
            return reduced.rotation(winding) - nu

        for fraction in _rationals_between(a.rotation, b.rotation, max_denominator):
            nu = float(fraction)
            try:
                brentq(offset, a.amplitude, b.amplitude, args=(nu,), xtol=1e-13, rtol=1e-13)
                reduced = last["reduced"]
                orbit = _close_orbit(params, reduced, fraction.denominator, tol, trust_radius, int_tol)
            except (NoReturnError, RefinementError, ModulusCollapseError, StepSizeError, ValueError) as e:
                logger.debug("ν=%s: %s", fraction, e)
                continue
            spread = float(np.max(orbit.r_max - orbit.r_min))
            if spread <= RIGID_SPREAD:
                logger.debug("ν=%s: 剛体解に近いため捨てます（幅 %.3e）", fraction, spread)
                continue
            logger.info("非剛体の周期軌道: ν=%s T=%.10g 幅 %.4g", fraction, orbit.period, spread)
            found.append(orbit)
            if len(found) >= max_orbits:
                return found
    logger.info("探索: 走査 %d 点から周期軌道 %d 個", len(points), len(found))
    return found


def _close_orbit(params: OdeParams, reduced: ReducedPeriod, count: int, tol: float,
                 trust_radius: float, int_tol: float) -> PeriodicOrbit:
    seed = turning_state(reduced.moduli)
    period = count * reduced.period
    residual = _closure_at(integrate(params, seed, period, int_tol), seed.to_vector(), period)
    if residual > tol:
        seed, period, residual = _shoot(params, seed, period, tol, trust_radius, int_tol)
        if residual > tol:
            raise RefinementError(f"閉じ残差 {residual:.3e} が {tol:.1e} まで下がりません")
    return build_orbit(params, seed, period, int_tol, residual)


def rigid_seed(lambdas: Sequence[float], winding: Sequence[int], alpha: float = 1.0):
    """
    |w_j| 一定の周期解 w_j = r_j e^{i c m_j s}、θ = π/2 + cΣm s

    符号が λ_j と同じ整数 m_j（Σm < 0、α > 0）に対し
    r_j² = −Σm·λ_j/(α m_j)、c = −α∏r_j/Σm、周期 2π/(c·gcd(m))。

    Returns:
        (OdeParams, OdeState, 周期)
    """
    params = OdeParams(tuple(lambdas), alpha)
    m = np.asarray(winding, dtype=float)
    lam = params.array
    if len(m) != len(lam) or np.any(np.sign(m) != np.sign(lam)):
        raise ValueError(f"m の符号は λ と一致する必要があります: {winding}")
    if not m.sum() * alpha < 0:
        raise ValueError("剛体解には αΣm < 0 が必要です")
    r = np.sqrt(-m.sum() * lam / (alpha * m))
    rate = -alpha * np.prod(r) / m.sum()
    period = 2 * math.pi / (rate * gcd_all(winding))
    return params, OdeState(tuple(r.astype(complex)), math.pi / 2), float(period)


def integer_orbit(spec: LambdaSpec):
    """整数族を ODE 解として表す：w_j = e^{iλ_j s}、θ = (Σλ)s + π/2、α = −Σλ"""
    if spec.total == 0:
        raise SliceError("Σλ = 0 では α = 0 となり ODE 族として表せません")
    params = OdeParams(spec.lambdas, -spec.total)
    return params, OdeState(tuple([1.0 + 0j] * spec.n), math.pi / 2)


# --- 周期初期値ファイル --------------------------------------------------------

@dataclass
class SeedRecord:
    """周期初期値ファイルの1レコード"""
    n: int
    k: int
    lambdas: List[float]
    alpha: float
    w_re: List[float]
    w_im: List[float]
    theta: float
    period_hint: float

    def params(self) -> OdeParams:
        return OdeParams(tuple(self.lambdas), self.alpha)

    def state(self) -> OdeState:
        return OdeState(tuple(complex(a, b) for a, b in zip(self.w_re, self.w_im)), self.theta)

    @classmethod
    def from_orbit(cls, orbit: PeriodicOrbit) -> "SeedRecord":
        w = np.array(orbit.initial.w)
        return cls(orbit.params.n, orbit.params.k, list(orbit.params.lambdas), orbit.params.alpha,
                   w.real.tolist(), w.imag.tolist(), orbit.initial.theta, orbit.period)


def load_seeds(path: str) -> List[SeedRecord]:
    """周期初期値ファイル（JSON）の読み込み"""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return [SeedRecord(**item) for item in data.get("seeds", [])]


def save_seeds(path: str, seeds: Sequence[SeedRecord]):
    """周期初期値ファイルへの書き込み"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"seeds": [asdict(s) for s in seeds]}, f, indent=2, ensure_ascii=False)


def select_seed(seeds: Sequence[SeedRecord], n: int, k: Optional[int] = None) -> SeedRecord:
    for seed in seeds:
        if seed.n == n and (k is None or seed.k == k):
            return seed
    raise LookupError(f"(n, k) = ({n}, {k}) の周期初期値がありません")


# --- スライスとはめ込み ----------------------------------------------------------

@dataclass(frozen=True)
class OdeSlice:
    """周期軌道から作るスライス V_t（C = 2t）"""
    orbit: PeriodicOrbit
    t: float
    level: float
    quadric: Quadric = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.level != 2.0 * self.t:
            raise SliceError(f"C={self.level} と t={self.t} が C = 2t を満たしません")
        object.__setattr__(self, "quadric", Quadric(self.orbit.params.array, self.level))

    @classmethod
    def at_time(cls, orbit: PeriodicOrbit, t: float) -> "OdeSlice":
        return cls(orbit, float(t), 2.0 * float(t))

    @property
    def params(self) -> OdeParams:
        return self.orbit.params

    @property
    def s_range(self) -> Tuple[float, float]:
        return 0.0, self.orbit.period

    @property
    def velocity_factor(self) -> float:
        """法速度 = H/α"""
        return 1.0 / self.params.alpha

    def moduli_sq(self, s: np.ndarray) -> np.ndarray:
        """|w_j(s)|² (S, n)"""
        w, _ = self.orbit.state_vectors(np.atleast_1d(s))
        return np.abs(w) ** 2

    def field(self, x: np.ndarray, s: np.ndarray):
        """
        節点ごとの (F, h, ラドン密度因子)

        h = iθ'·∂_sF/|∂_sF|²、密度因子 = ∏r_j²·Σ(λ_j²x_j²/r_j²)/√(Σλ_j²x_j²)
        """
        lam = self.params.array
        s = np.asarray(s, dtype=float)
        uniq, inverse = np.unique(s, return_inverse=True)
        w_u, theta_u = self.orbit.state_vectors(uniq)
        dw_u, dtheta_u = rhs_batch(self.params, w_u, theta_u)
        w, dw, dtheta = w_u[inverse], dw_u[inverse], dtheta_u[inverse]
        position = x * w
        velocity = x * dw
        speed_sq = np.sum(np.abs(velocity) ** 2, axis=1)
        h = 1j * (dtheta / speed_sq)[:, None] * velocity
        r_sq = np.abs(w) ** 2
        weighted = np.sum(lam ** 2 * x ** 2 / r_sq, axis=1)
        radon = np.prod(r_sq, axis=1) * weighted / np.sqrt(np.sum(lam ** 2 * x ** 2, axis=1))
        return position, h, radon


def immerse_ode(slice_: OdeSlice, x, s: float) -> np.ndarray:
    """F(x, s) = (x_j w_j(s))"""
    x = np.asarray(x, dtype=float)
    slice_.quadric.check_on_slice(x)
    w, _ = slice_.orbit.state_vectors([s])
    return x * w[0]


@dataclass(frozen=True)
class OdeDensity:
    position_norm_sq: float
    h_norm_sq: float
    radon_density: float


def density_closed_form_ode(slice_: OdeSlice, x, s: float) -> OdeDensity:
    """
    閉形式の (|V_t|², |h|², ラドン密度因子)

    |h|² = α² sin²(φ−θ)/Σ(λ_j²x_j²/r_j²)、φ = Σ arg w_j
    """
    x = np.asarray(x, dtype=float)
    slice_.quadric.check_on_slice(x)
    if np.linalg.norm(x) <= 1e-12:
        raise SliceError("錐の頂点 x = 0 では密度が定義されません")
    lam = slice_.params.array
    w, theta = slice_.orbit.state_vectors([s])
    w, theta = w[0], float(theta[0])
    r_sq = np.abs(w) ** 2
    weighted = float(np.sum(lam ** 2 * x ** 2 / r_sq))
    phi = float(np.sum(np.angle(w)))
    return OdeDensity(
        position_norm_sq=float(np.sum(r_sq * x ** 2)),
        h_norm_sq=slice_.params.alpha ** 2 * math.sin(phi - theta) ** 2 / weighted,
        radon_density=float(np.prod(r_sq)) * weighted / math.sqrt(float(np.sum(lam ** 2 * x ** 2))),
    )


def chart(slice_: OdeSlice, branch=(1.0, 1.0)) -> Immersion:
    """u = (r, 角⁺, 角⁻, s) のはめ込みチャート。角は θ(s)"""
    quadric = slice_.quadric
    quadric.require_mixed()
    orbit = slice_.orbit
    lower, upper = quadric.chart_bounds()

    def evaluate(u):
        u, single = as_batch(u)
        w, _ = orbit.state_vectors(u[:, -1])
        out = quadric.chart_points(u[:, :-1], branch) * w
        return out[0] if single else out

    def derivative(u):
        u, single = as_batch(u)
        w, theta = orbit.state_vectors(u[:, -1])
        dw, _ = rhs_batch(slice_.params, w, theta)
        x = quadric.chart_points(u[:, :-1], branch)
        jac = quadric.chart_jacobians(u[:, :-1], branch) * w[:, :, None]
        out = np.concatenate([jac, (x * dw)[:, :, None]], axis=2)
        return out[0] if single else out

    def orientation(u):
        u, single = as_batch(u)
        signs = quadric.orientations(u[:, :-1], branch)
        return float(signs[0]) if single else signs

    def angle_hint(u):
        _, theta = orbit.state_vectors([u[-1]])
        return float(np.mod(theta[0], 2 * math.pi))

    return Immersion(
        dim_domain=slice_.params.n,
        evaluate=evaluate,
        derivative=derivative,
        angle_hint=angle_hint,
        orientation=orientation,
        lower=np.concatenate([lower, [-orbit.pad]]),
        upper=np.concatenate([upper, [orbit.period + orbit.pad]]),
        name=f"ode[{','.join(f'{v:g}' for v in slice_.params.lambdas)}] C={slice_.level:g}",
        batched=True,
    )


def chart_density(slice_: OdeSlice, u, branch=(1.0, 1.0)) -> float:
    """閉形式の体積形式 × 面積要素 × ラドン因子（u に関する密度）"""
    x = slice_.quadric.chart_point(u[:-1], branch)
    _, _, radon = slice_.field(x[None, :], np.array([u[-1]]))
    return float(radon[0]) * slice_.quadric.chart_density(u[:-1], branch)


class OdeFamily:
    """周期軌道を固定した ODE 族 {V_t}"""

    kind = "ode"

    def __init__(self, orbit: PeriodicOrbit):
        self.orbit = orbit

    @property
    def n(self) -> int:
        return self.orbit.params.n

    def slice(self, t: float) -> OdeSlice:
        return OdeSlice.at_time(self.orbit, t)

    def describe(self) -> dict:
        return {
            "family": self.kind,
            "lambdas": list(self.orbit.params.lambdas),
            "alpha": self.orbit.params.alpha,
            "period": self.orbit.period,
        }
