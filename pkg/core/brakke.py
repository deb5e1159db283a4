"""
Brakke 流の汎関数
質量 ‖V_t‖(φ) と第一変分 δ(V_t, φ)(h) = −∫φ|h|² + ∫Dφ·h をテンソル積 Gauss–Legendre で求積し、
t → 0± の極限を錐 (t = 0) の値と比較する。n = 2 の対数発散も調べる。

スライスは整数族・ODE 族のどちらでもよく、次を持つこと:
    quadric, s_range, velocity_factor, t, field(x, s) -> (F, h, ラドン密度因子),
    moduli_sq(s) -> |F_j| / |x_j| の2乗 (S, n)
族は slice(t)、kind、n、describe() を持つこと。
"""
import concurrent.futures
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import linregress

from .errors import FitError, QuadratureError, SliceError
from .geometry import DEFAULT_STEP, Immersion, tangent_frame
from .quadric import gauss_legendre

logger = logging.getLogger(__name__)

CHUNK_SIZE = 8
LIMIT_TOL = 0.02
FLOW_TOL = 0.01
FLOW_ATOL = 1e-8
FLOW_STEP = 0.01
QUAD_TOL = 1e-3
QUAD_ATOL = 1e-10
RICHARDSON_ORDER = 3


def gram_density(imm: Immersion, u, h: float = DEFAULT_STEP) -> float:
    """√det(Gram(T_1, …, T_n))"""
    return math.sqrt(tangent_frame(imm, u, h).metric().determinant)


@dataclass(frozen=True)
class TestFunction:
    """
    φ(z) = A·max(0, 1 − |z−c|²/R²)³

    C¹ でサポートは半径 R の閉球。
    """
    center: Tuple[complex, ...]
    radius: float
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(complex(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError(f"半径は正である必要があります: {self.radius}")

    @classmethod
    def at_origin(cls, n: int, radius: float = 1.0, amplitude: float = 1.0) -> "TestFunction":
        return cls(tuple([0j] * n), radius, amplitude)

    @classmethod
    def vanishing_at_origin(cls, n: int, radius: float = 1.0, amplitude: float = 1.0) -> "TestFunction":
        """中心を原点から R 離した φ(0) = 0 のバンプ"""
        return cls(tuple([complex(radius)] + [0j] * (n - 1)), radius, amplitude)

    def scaled(self, sigma: float) -> "TestFunction":
        """φ(·/σ)"""
        return TestFunction(tuple(sigma * c for c in self.center), sigma * self.radius, self.amplitude)

    @property
    def reach(self) -> float:
        """サポートが収まる原点中心の球の半径"""
        return float(np.linalg.norm(self.center)) + self.radius

    def _rho(self, z):
        return np.sum(np.abs(np.atleast_2d(z) - np.array(self.center)) ** 2, axis=1) / self.radius ** 2

    def value(self, z) -> np.ndarray:
        return self.amplitude * np.clip(1.0 - self._rho(z), 0.0, None) ** 3

    def gradient(self, z) -> np.ndarray:
        """実勾配を ∂_x + i∂_y として複素数に詰めたもの (N, n)"""
        z = np.atleast_2d(z)
        base = np.clip(1.0 - self._rho(z), 0.0, None)
        coeff = -6.0 * self.amplitude * base ** 2 / self.radius ** 2
        return coeff[:, None] * (z - np.array(self.center))

    def directional(self, z, v) -> np.ndarray:
        """Dφ·v = Re Σ conj(∇φ)·v"""
        return np.real(np.sum(np.conj(self.gradient(z)) * np.atleast_2d(v), axis=1))


@dataclass(frozen=True)
class BumpSum:
    """バンプの線形結合 Σ c_i φ_i"""
    terms: Tuple[Tuple[float, TestFunction], ...]

    @property
    def reach(self) -> float:
        return max(phi.reach for _, phi in self.terms)

    def value(self, z):
        return sum(c * phi.value(z) for c, phi in self.terms)

    def gradient(self, z):
        return sum(c * phi.gradient(z) for c, phi in self.terms)

    def directional(self, z, v):
        return sum(c * phi.directional(z, v) for c, phi in self.terms)


@dataclass(frozen=True)
class GridResolution:
    """求積の解像度。refined() で各方向2倍"""
    r_panels: int = 8
    r_order: int = 8
    angle_nodes: int = 16
    s_nodes: int = 64

    def refined(self) -> "GridResolution":
        return GridResolution(2 * self.r_panels, self.r_order, 2 * self.angle_nodes, 2 * self.s_nodes)

    def label(self) -> str:
        return f"r{self.r_panels}x{self.r_order}/a{self.angle_nodes}/s{self.s_nodes}"


@dataclass(frozen=True)
class QuadratureGrid:
    """
    スライス上の求積格子

    角度節点の組 (X₁, X₂) と重み、r の単位節点 u、s の節点と重みを持つ。
    r の範囲は (組, s) ごとに |F| = reach となる半径までとり、r = r_end u² で原点付近に集める。
    r_max はその全体の上限で、0 ならサポートはスライスに届かない。
    """
    resolution: GridResolution
    omega_plus: np.ndarray
    omega_minus: np.ndarray
    pair_weights: np.ndarray
    unit_nodes: np.ndarray
    unit_weights: np.ndarray
    s_nodes: np.ndarray
    s_weights: np.ndarray
    reach: float
    r_max: float

    @property
    def size(self) -> int:
        return len(self.unit_nodes) * len(self.pair_weights) * len(self.s_weights)

    @classmethod
    def build(cls, slice_, resolution: GridResolution, reach: float) -> "QuadratureGrid":
        """
        Args:
            slice_: スライス
            resolution: 解像度
            reach: |F| ≤ reach の点を覆うように r の範囲を決める
        """
        quadric = slice_.quadric
        quadric.require_mixed()
        ang_p, sgn_p, wp = quadric.plus.quadrature(resolution.angle_nodes)
        ang_m, sgn_m, wm = quadric.minus.quadrature(resolution.angle_nodes)
        x1 = quadric.plus.points(ang_p, sgn_p)
        x2 = quadric.minus.points(ang_m, sgn_m)
        # |F| ≥ ρ_min|x|
        r_max = quadric.support_radius(reach / _modulus_floor(slice_), x1, x2)
        ip, im = (g.ravel() for g in np.meshgrid(np.arange(len(wp)), np.arange(len(wm)), indexing="ij"))
        u, wu = gauss_legendre(0.0, 1.0, resolution.r_order, resolution.r_panels)
        s_lo, s_hi = slice_.s_range
        s, ws = gauss_legendre(s_lo, s_hi, resolution.s_nodes)
        return cls(resolution, x1[ip], x2[im], wp[ip] * wm[im], u, wu, s, ws, float(reach), float(r_max))

    def radial(self, quadric, moduli_sq: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        s 節点ごとの r 節点と重み

        |F|² = p²Σ X₁ⱼ²|wⱼ|² + q²Σ X₂ⱼ²|wⱼ|² なので、組と s ごとに |F| = reach を閉じた形で解ける。

        Args:
            quadric: スライスの二次曲面
            moduli_sq: |w_j(s)|² (S, n)
        Returns:
            (r, 重み) いずれも (S, 組の数, r 節点数)
        """
        k = self.omega_plus.shape[1]
        a1 = moduli_sq[:, :k] @ (self.omega_plus ** 2).T
        a2 = moduli_sq[:, k:] @ (self.omega_minus ** 2).T
        r_end = quadric.radial_reach(self.reach, a1, a2)[..., None]
        return r_end * self.unit_nodes ** 2, 2.0 * r_end * self.unit_nodes * self.unit_weights

    def sigma_nodes(self, quadric) -> Tuple[np.ndarray, np.ndarray]:
        """r ∈ [0, r_max] に固定した Σ 側の節点 (r, x)"""
        count = len(self.pair_weights)
        r = np.repeat(self.r_max * self.unit_nodes ** 2, count)
        tiles = len(self.unit_nodes)
        return r, quadric.assemble(r, np.tile(self.omega_plus, (tiles, 1)), np.tile(self.omega_minus, (tiles, 1)))


def _modulus_floor(slice_) -> float:
    orbit = getattr(slice_, "orbit", None)
    return 1.0 if orbit is None else float(np.min(orbit.r_min))


@dataclass
class FunctionalReport:
    """1つの (族, φ, t) に対する求積結果"""
    t: float
    mass: float
    variation: float
    curvature_term: float
    transport_term: float
    error_estimate: float
    grid: str
    nodes: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def pairwise_sum(values: Sequence[float]) -> float:
    """順序固定の二分木和"""
    values = list(values)
    if not values:
        return 0.0
    while len(values) > 1:
        paired = [values[i] + values[i + 1] for i in range(0, len(values) - 1, 2)]
        if len(values) % 2:
            paired.append(values[-1])
        values = paired
    return float(values[0])


def _chunk_sums(slice_, phi, grid: QuadratureGrid, lo: int, hi: int) -> np.ndarray:
    """s 節点 [lo, hi) の寄与 (質量, ∫φ|h|², ∫Dφ·h)"""
    quadric = slice_.quadric
    s = grid.s_nodes[lo:hi]
    r, wr = grid.radial(quadric, slice_.moduli_sq(s))
    keep = wr.ravel() > 0
    if not np.any(keep):
        return np.zeros(3)
    si, pi, _ = (g.ravel()[keep] for g in np.indices(r.shape))
    r = r.ravel()[keep]
    x1, x2 = grid.omega_plus[pi], grid.omega_minus[pi]
    x = quadric.assemble(r, x1, x2)
    weight = (wr.ravel()[keep] * grid.pair_weights[pi] * grid.s_weights[lo:hi][si]
              * quadric.volume_form(r, x1, x2))
    position, h, radon = slice_.field(x, s[si])
    value = phi.value(position)
    weight = weight * radon
    return np.array([
        np.sum(weight * value),
        np.sum(weight * value * np.sum(np.abs(h) ** 2, axis=1)),
        np.sum(weight * phi.directional(position, h)),
    ])


def integrate_functionals(slice_, phi, grid: QuadratureGrid, workers: int = 1) -> Tuple[float, float, float]:
    """
    1つの格子で (質量, ∫φ|h|², ∫Dφ·h) を求める

    s 節点を固定幅のチャンクに分けてスレッドで評価し、チャンク順に二分木和をとる。
    """
    if grid.r_max <= 0:
        # サポートがスライスに点でしか触れない
        return 0.0, 0.0, 0.0
    bounds = [(lo, min(lo + CHUNK_SIZE, len(grid.s_nodes)))
              for lo in range(0, len(grid.s_nodes), CHUNK_SIZE)]
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_chunk_sums, slice_, phi, grid, lo, hi) for lo, hi in bounds]
            parts = [f.result() for f in futures]
    else:
        parts = [_chunk_sums(slice_, phi, grid, lo, hi) for lo, hi in bounds]
    totals = [pairwise_sum([p[i] for p in parts]) for i in range(3)]
    return totals[0], totals[1], totals[2]


def _is_empty(slice_) -> bool:
    quadric = slice_.quadric
    if quadric.is_empty:
        return True
    if not quadric.is_mixed:
        raise SliceError(f"コンパクトな一符号スライス (C={quadric.level:g}) の求積は扱いません")
    return False


def mass(slice_, phi, resolution: GridResolution = GridResolution(), workers: int = 1) -> float:
    """‖V_t‖(φ)"""
    if _is_empty(slice_):
        return 0.0
    grid = QuadratureGrid.build(slice_, resolution, phi.reach)
    return integrate_functionals(slice_, phi, grid, workers)[0]


def first_variation(slice_, phi, resolution: GridResolution = GridResolution(), workers: int = 1) -> float:
    """δ(V_t, φ)(h) = −∫φ|h|² d‖V_t‖ + ∫Dφ·h d‖V_t‖"""
    if _is_empty(slice_):
        return 0.0
    grid = QuadratureGrid.build(slice_, resolution, phi.reach)
    _, curvature, transport = integrate_functionals(slice_, phi, grid, workers)
    return -curvature + transport


def evaluate(slice_, phi, resolution: GridResolution = GridResolution(), workers: int = 1,
             refine: bool = True, tol: Optional[float] = QUAD_TOL) -> FunctionalReport:
    """
    質量と第一変分を求め、2倍格子との差を誤差見積もりとして付ける

    refine=True なら細かい格子の値を報告する。

    Raises:
        QuadratureError: 誤差見積もりが tol·max(質量, |各項|) を超えた（tol=None なら判定しない）
    """
    t = float(slice_.t) if slice_.t is not None else float("nan")
    if _is_empty(slice_):
        return FunctionalReport(t, 0.0, 0.0, 0.0, 0.0, 0.0, resolution.label(), 0)
    grid = QuadratureGrid.build(slice_, resolution, phi.reach)
    base = integrate_functionals(slice_, phi, grid, workers)
    values, error, label, size = base, 0.0, resolution.label(), grid.size
    if refine:
        fine_res = resolution.refined()
        fine_grid = QuadratureGrid.build(slice_, fine_res, phi.reach)
        values = integrate_functionals(slice_, phi, fine_grid, workers)
        error = max(abs(values[0] - base[0]), abs((values[2] - values[1]) - (base[2] - base[1])))
        label, size = fine_res.label(), fine_grid.size
        scale = max(abs(values[0]), abs(values[1]), abs(values[2]))
        if tol is not None and error > tol * scale + QUAD_ATOL:
            raise QuadratureError(
                f"t={t:g} の求積が収束していません（誤差見積もり {error:.3e}、規模 {scale:.3e}、格子 {label}）")
    logger.debug("t=%g mass=%.12g var=%.12g err=%.3e", t, values[0], values[2] - values[1], error)
    return FunctionalReport(t, values[0], values[2] - values[1], values[1], values[2], error, label, size)


def volume_bound_holds(slice_, resolution: GridResolution, reach: float) -> Tuple[bool, float]:
    """
    全節点で 体積形式の冪因子 ≤ (Σλ_j²x_j²)^{(n−2)/2} を確認（|λ_j| ≥ 1 のとき）

    Returns:
        (成立, 最大比)
    """
    quadric = slice_.quadric
    if np.any(np.abs(quadric.lambdas) < 1):
        raise ValueError("上界評価は |λ_j| ≥ 1 を仮定します")
    grid = QuadratureGrid.build(slice_, resolution, reach)
    if grid.r_max <= 0:
        return True, 0.0
    radii, points = grid.sigma_nodes(quadric)
    ratio = quadric.radial_power(radii) / quadric.volume_bound(points)
    worst = float(np.max(ratio))
    return worst <= 1.0 + 1e-12, worst


@dataclass
class FlowIdentityReport:
    """
    d/dt ‖V_t‖(φ) と velocity_factor·δ(V_t, φ)(h) の比較

    scale は両辺と |velocity_factor|·(∫φ|h|² + |∫Dφ·h|) の最大。
    差がこれに対して小さいかで判定し、サポートに掛からない t は対象外として通す。
    """
    t: float
    mass: float
    mass_rate: float
    variation: float
    scale: float
    applicable: bool = True
    tolerance: float = FLOW_TOL

    @property
    def absolute_error(self) -> float:
        return abs(self.mass_rate - self.variation)

    @property
    def relative_error(self) -> float:
        return self.absolute_error / self.scale if self.scale > 0 else 0.0

    @property
    def passed(self) -> bool:
        if not self.applicable:
            return True
        return self.absolute_error <= FLOW_ATOL + self.tolerance * self.scale

    @property
    def status(self) -> str:
        if not self.applicable:
            return "n/a"
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "mass": self.mass,
            "mass_rate": self.mass_rate,
            "variation": self.variation,
            "scale": self.scale,
            "absolute_error": self.absolute_error,
            "relative_error": self.relative_error,
            "status": self.status,
        }


def default_flow_times(t0: float) -> List[float]:
    """φ のサポートがスライスの内部に掛かる既定の時刻 ±t0/4"""
    return [-abs(t0) / 4, abs(t0) / 4]


def flow_identity(family, phi, t: float, step: Optional[float] = None,
                  resolution: GridResolution = GridResolution(), workers: int = 1,
                  tol: float = FLOW_TOL) -> FlowIdentityReport:
    """
    滑らかな流れの恒等式 d/dt ‖V_t‖(φ) = velocity_factor·δ(V_t, φ)(h) を4次中心差分で確認
    """
    if t == 0:
        raise SliceError("t = 0 は滑らかなスライスではありません")
    delta = FLOW_STEP * abs(t) if step is None else step
    offsets = (-2, -1, 1, 2)
    coeffs = (1.0, -8.0, 8.0, -1.0)
    masses = [mass(family.slice(t + o * delta), phi, resolution, workers) for o in offsets]
    rate = sum(c * m for c, m in zip(coeffs, masses)) / (12 * delta)
    slice_ = family.slice(t)
    center = evaluate(slice_, phi, resolution, workers, refine=False)
    factor = slice_.velocity_factor
    variation = factor * center.variation
    scale = max(abs(rate), abs(variation),
                abs(factor) * (center.curvature_term + abs(center.transport_term)))
    applicable = max(masses + [center.mass]) > 0
    report = FlowIdentityReport(t, center.mass, rate, variation, scale, applicable, tol)
    logger.info("流れの恒等式 t=%g: %s（差 %.3e、規模 %.3e）", t, report.status, report.absolute_error, scale)
    return report


# --- 極限の確認 ----------------------------------------------------------------

@dataclass
class Extrapolation:
    """
    外挿の結果

    error は同じ次数で1段粗い末尾から外挿した値との差。単調でない列では limit は None。
    """
    limit: Optional[float]
    rate: Optional[float]
    monotone: bool
    error: Optional[float] = None
    order: int = 0


@dataclass
class SideLimit:
    """片側 (t → 0− または 0+) の列と外挿値"""
    sign: int
    records: List[FunctionalReport]
    fit: Extrapolation
    relative_error: Optional[float]
    tolerance: float = LIMIT_TOL
    scale: float = 1.0

    @property
    def limit(self) -> Optional[float]:
        return self.fit.limit

    @property
    def rate(self) -> Optional[float]:
        return self.fit.rate

    @property
    def monotone(self) -> bool:
        return self.fit.monotone

    @property
    def converged(self) -> bool:
        """外挿値が段ごとに tol·|錐の値| 以内で落ち着いている"""
        return self.fit.error is not None and self.fit.error <= self.tolerance * self.scale


@dataclass
class LimitReport:
    cone: FunctionalReport
    sides: List[SideLimit]
    verdict: str
    tolerance: float = LIMIT_TOL

    @property
    def records(self) -> List[FunctionalReport]:
        out = []
        for side in self.sides:
            out.extend(side.records)
        return sorted(out + [self.cone], key=lambda r: r.t)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "cone": self.cone.to_dict(),
            "sides": [{
                "sign": s.sign,
                "limit": s.limit,
                "rate": s.rate,
                "order": s.fit.order,
                "extrapolation_error": s.fit.error,
                "relative_error": s.relative_error,
                "monotone": s.monotone,
                "converged": s.converged,
            } for s in self.sides],
        }


def dyadic_times(t0: float, levels: int, sign: int) -> List[float]:
    """t_m = ±t0·2^{−m}、m = 0…levels−1"""
    return [sign * abs(t0) * 2.0 ** (-m) for m in range(levels)]


def _neville_at_zero(sigma: np.ndarray, values: np.ndarray) -> float:
    """(σ_i, v_i) を通る多項式の σ = 0 での値"""
    p = np.array(values, dtype=float)
    for k in range(1, len(p)):
        p = (sigma[:-k] * p[1:] - sigma[k:] * p[:-1]) / (sigma[:-k] - sigma[k:])
    return float(p[0])


def extrapolate(times: Sequence[float], values: Sequence[float],
                order: int = RICHARDSON_ORDER) -> Extrapolation:
    """
    t → 0 の極限を σ = √|t| の多項式で外挿する

    スライスの汎関数は √|t| の冪で展開されるので、次数 d = 1…order ごとに末尾 d+1 点を通る多項式の
    σ = 0 での値をとり、1段粗い末尾 d+1 点での値との差が最小の次数を採用する。
    末尾の差分の符号が揃わない、または差分の比が 1 以上なら単調に収束していないとみなす。
    """
    if len(values) < 3:
        raise QuadratureError("外挿には3点以上必要です")
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(t) != len(v) or np.any(t == 0):
        raise ValueError("t と値の長さが合わないか、t = 0 が含まれています")
    tail = np.diff(v[-4:])
    scale = max(1.0, float(np.max(np.abs(v[-3:]))))
    if np.all(np.abs(tail) <= 1e-12 * scale):
        return Extrapolation(float(v[-1]), 0.0, True, 0.0, 0)
    if not (np.all(tail > 0) or np.all(tail < 0)):
        return Extrapolation(None, None, False)
    q = float(tail[-1] / tail[-2])
    if q >= 1:
        return Extrapolation(None, q, False)

    sigma = np.sqrt(np.abs(t))
    best = None
    for d in range(1, min(order, len(v) - 2) + 1):
        last = _neville_at_zero(sigma[-d - 1:], v[-d - 1:])
        previous = _neville_at_zero(sigma[-d - 2:-1], v[-d - 2:-1])
        error = abs(last - previous)
        if best is None or error < best.error:
            best = Extrapolation(last, q, True, error, d)
    return best


def limit_check(family, phi, t0: float = 0.5, levels: int = 10,
                resolution: GridResolution = GridResolution(), tol: float = LIMIT_TOL,
                workers: int = 1, sides: Sequence[int] = (-1, 1),
                quad_tol: Optional[float] = QUAD_TOL) -> LimitReport:
    """
    t_m = ±t0·2^{−m} の第一変分を外挿し、錐での値と比較する

    いずれかの側が単調でないか外挿値が段ごとに落ち着かなければ INCONCLUSIVE、
    すべて tol 以内なら PASS、それ以外は FAIL。

    Raises:
        QuadratureError: いずれかの t で求積が quad_tol に収まらない
    """
    if family.n == 2 and abs(float(np.real(phi.value(np.zeros((1, 2)))[0]))) > 0:
        logger.warning("n = 2 で φ(0) ≠ 0 のため、第一変分は t → 0 で発散します")
    cone = evaluate(family.slice(0.0), phi, resolution, workers, tol=quad_tol)
    scale = max(abs(cone.variation), 1e-12)
    results = []
    for sign in sides:
        times = dyadic_times(t0, levels, sign)
        records = [evaluate(family.slice(t), phi, resolution, workers, tol=quad_tol) for t in times]
        fit = extrapolate(times, [r.variation for r in records])
        rel = None
        if fit.limit is not None:
            rel = abs(fit.limit - cone.variation) / scale
            if abs(fit.limit - cone.variation) <= 1e-10:
                rel = 0.0
        side = SideLimit(sign, records, fit, rel, tol, scale)
        arrow = "−" if sign < 0 else "+"
        if not side.monotone:
            logger.warning("t → 0%s の列が単調ではありません", arrow)
        elif not side.converged:
            logger.warning("t → 0%s の外挿値が落ち着いていません（段差 %.3e）", arrow, fit.error)
        results.append(side)

    if any(not (s.monotone and s.converged) for s in results):
        verdict = "INCONCLUSIVE"
    elif all(s.relative_error <= tol for s in results):
        verdict = "PASS"
    else:
        verdict = "FAIL"
    logger.info("極限判定 %s（錐 %.8g、外挿 %s）", verdict, cone.variation,
                ", ".join("n/a" if s.limit is None else f"{s.limit:.8g}" for s in results))
    return LimitReport(cone, results, verdict, tol)


# --- n = 2 の対数発散 ------------------------------------------------------------

@dataclass
class LogProbeReport:
    times: List[float]
    curvature_terms: List[float]
    transport_terms: List[float]
    abscissa: float
    slope: float
    intercept: float
    correlation: float
    transport_rate: float
    transport_converging: bool
    records: List[FunctionalReport] = field(default_factory=list)

    @property
    def divergent(self) -> bool:
        return self.slope > 0 and self.correlation > 0.99

    def to_dict(self) -> dict:
        return {
            "times": self.times,
            "curvature_terms": self.curvature_terms,
            "transport_terms": self.transport_terms,
            "abscissa": self.abscissa,
            "slope": self.slope,
            "intercept": self.intercept,
            "correlation": self.correlation,
            "transport_rate": self.transport_rate,
            "transport_converging": self.transport_converging,
            "divergent": self.divergent,
        }


def _log_abscissa(times: np.ndarray, a: float) -> np.ndarray:
    root = np.sqrt(-times)
    return np.log((a + root) / root)


def step_ratio(values: Sequence[float]) -> Tuple[float, bool]:
    """
    粗い順に並んだ列の逐次差 |v_{k+1} − v_k| の縮み率

    log|差| を段数に回帰した傾きから比 q を出す。q < 1 かつ最後の差が最初の差以下、
    または差がすべて無視できる大きさなら収束しているとみなす。

    Returns:
        (q, 収束しているか)
    """
    v = np.asarray(values, dtype=float)
    steps = np.abs(np.diff(v))
    scale = max(1.0, float(np.max(np.abs(v))))
    if np.all(steps <= 1e-6 * scale):
        return 0.0, True
    fit = linregress(np.arange(len(steps)), np.log(np.maximum(steps, 1e-300)))
    q = math.exp(fit.slope)
    return q, bool(q < 1 and steps[-1] <= steps[0])


def log_divergence_probe(family, phi, times: Sequence[float],
                         resolution: GridResolution = GridResolution(),
                         workers: int = 1, quad_tol: Optional[float] = QUAD_TOL) -> LogProbeReport:
    """
    n = 2 で ∫φ|h|² d‖V_t‖ を ln((a + √−t)/√−t) に回帰する

    a は相関係数が最大になるよう選ぶ。t は |t| の大きい順に並べ直し、∫Dφ·h の逐次差が縮むことも確認する。

    Raises:
        FitError: t が負でない、点が足りない、回帰が有限にならない
    """
    if family.n != 2:
        raise FitError(f"対数発散の確認は n = 2 専用です（n = {family.n}）")
    times = np.asarray(sorted(times), dtype=float)
    if len(times) < 3 or np.any(times >= 0):
        raise FitError("t < 0 の点が3つ以上必要です")
    records = [evaluate(family.slice(float(t)), phi, resolution, workers, tol=quad_tol) for t in times]
    curvature = np.array([r.curvature_term for r in records])
    transport = np.array([r.transport_term for r in records])

    def negative_correlation(log_a):
        fit = linregress(_log_abscissa(times, math.exp(log_a)), curvature)
        return -fit.rvalue if np.isfinite(fit.rvalue) else 1.0

    best = minimize_scalar(negative_correlation, bounds=(math.log(1e-3), math.log(1e2)), method="bounded")
    a = math.exp(best.x)
    fit = linregress(_log_abscissa(times, a), curvature)
    if not (np.isfinite(fit.slope) and np.isfinite(fit.rvalue)):
        raise FitError("回帰が有限値になりません")

    rate, converging = step_ratio(transport)
    logger.info("対数発散: 傾き %.6g 相関 %.6f a=%.4g 輸送項の縮み率 %.3g", fit.slope, fit.rvalue, a, rate)
    return LogProbeReport(times.tolist(), curvature.tolist(), transport.tolist(), a,
                          float(fit.slope), float(fit.intercept), float(fit.rvalue),
                          rate, converging, records)
