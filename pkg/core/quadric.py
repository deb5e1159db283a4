"""
実二次超曲面 Σ_C = {Σ λ_j x_j² = C} ⊂ ℝⁿ のパラメータ表示
整数族と ODE 族の両方がこのモジュールの Σ チャートを共有する。

λ は正の成分を先頭に並べる（λ_1…λ_k > 0 > λ_{k+1}…λ_n）。
X₁ は {Σ_{j≤k}|λ_j|x_j² = 1} ⊂ ℝ^k、X₂ は {Σ_{j>k}|λ_j|x_j² = 1} ⊂ ℝ^{n−k} の点。
  C > 0: x = √(r²+C)·X₁ + r·X₂
  C < 0: x = r·X₁ + √(r²−C)·X₂
  C = 0: x = r(X₁ + X₂), r > 0
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import OffSliceError, SliceError

logger = logging.getLogger(__name__)

ON_SLICE_TOL = 1e-10


def gauss_legendre(a: float, b: float, order: int, panels: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    [a, b] 上の合成 Gauss–Legendre 則

    Args:
        a, b: 区間
        order: パネルごとの節点数
        panels: 等分パネル数

    Returns:
        (節点, 重み)
    """
    x, w = leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class EllipsoidFactor:
    """
    楕円体 {Σ_j w_j x_j² = 1} ⊂ ℝ^m（w_j = |λ_j|）

    単位球の超球座標を 1/√w_j で伸ばしてチャートにする。
    先頭 m−2 個の角は極角 [0, π]、最後の角は方位角 [0, 2π)。
    m = 1 のときは2点集合 S⁰ で、角の代わりに符号で点を選ぶ。
    """

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=float)
        self.dim = len(self.weights)

    @property
    def n_angles(self) -> int:
        return max(self.dim - 1, 0)

    def _sphere(self, angles: np.ndarray) -> np.ndarray:
        m = self.dim
        s, c = np.sin(angles), np.cos(angles)
        out = np.empty((angles.shape[0], m))
        prod = np.ones(angles.shape[0])
        for i in range(m - 1):
            out[:, i] = prod * c[:, i]
            prod = prod * s[:, i]
        out[:, m - 1] = prod
        return out

    def _sphere_tangents(self, angles: np.ndarray) -> np.ndarray:
        m = self.dim
        s, c = np.sin(angles), np.cos(angles)
        out = np.zeros((angles.shape[0], m, m - 1))
        for i in range(m):
            last = i == m - 1
            for a in range(m - 1):
                if not last and a > i:
                    continue
                term = np.ones(angles.shape[0])
                for b in range(min(i, m - 1)):
                    term = term * (c[:, b] if b == a else s[:, b])
                if not last:
                    term = term * (-s[:, i] if a == i else c[:, i])
                out[:, i, a] = term
        return out

    def points(self, angles, signs=None) -> np.ndarray:
        """角（m=1 では符号）から楕円体上の点 (N, m) を返す"""
        angles = np.atleast_2d(np.asarray(angles, dtype=float))
        if self.dim == 1:
            signs = np.ones(angles.shape[0]) if signs is None else np.asarray(signs, dtype=float)
            return (signs / np.sqrt(self.weights[0]))[:, None]
        return self._sphere(angles) / np.sqrt(self.weights)

    def tangents(self, angles) -> np.ndarray:
        """∂X/∂角 (N, m, m−1)"""
        angles = np.atleast_2d(np.asarray(angles, dtype=float))
        if self.dim == 1:
            return np.zeros((angles.shape[0], 1, 0))
        return self._sphere_tangents(angles) / np.sqrt(self.weights)[None, :, None]

    def area_element(self, angles) -> np.ndarray:
        """角チャートに関する楕円体の面積要素 √det(Gram)"""
        angles = np.atleast_2d(np.asarray(angles, dtype=float))
        if self.dim == 1:
            return np.ones(angles.shape[0])
        t = self.tangents(angles)
        gram = np.einsum("nia,nib->nab", t, t)
        return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))

    def normal_component(self, points) -> np.ndarray:
        """|X^⊥|: X の楕円体法線方向成分の長さ（部分空間 ℝ^m の中で）"""
        x = np.atleast_2d(points)
        normal = x * self.weights
        normal = normal / np.linalg.norm(normal, axis=1, keepdims=True)
        return np.abs(np.sum(x * normal, axis=1))

    def angles_of(self, point) -> Tuple[np.ndarray, float]:
        """点から（角, 符号）を逆算する"""
        sphere = np.asarray(point, dtype=float) * np.sqrt(self.weights)
        sphere = sphere / np.linalg.norm(sphere)
        if self.dim == 1:
            return np.zeros(0), float(np.sign(sphere[0]) or 1.0)
        m = self.dim
        angles = np.zeros(m - 1)
        for a in range(m - 2):
            tail = np.linalg.norm(sphere[a:])
            angles[a] = np.arccos(np.clip(sphere[a] / tail, -1.0, 1.0)) if tail > 0 else 0.0
        angles[m - 2] = np.mod(np.arctan2(sphere[m - 1], sphere[m - 2]), 2 * np.pi)
        return angles, 1.0

    def angle_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.dim <= 1:
            return np.zeros(0), np.zeros(0)
        lower = np.full(self.dim - 1, 0.0)
        upper = np.full(self.dim - 1, np.pi)
        lower[-1], upper[-1] = -np.inf, np.inf
        return lower, upper

    def quadrature(self, nodes: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        楕円体上の求積則

        Args:
            nodes: 方位角の節点数（極角はその半分）

        Returns:
            (角 (N, m−1), 符号 (N,), 重み (N,))。重みは面積要素込み
        """
        if self.dim == 1:
            return np.zeros((2, 0)), np.array([1.0, -1.0]), np.ones(2)
        axes = []
        for a in range(self.dim - 1):
            if a < self.dim - 2:
                axes.append(gauss_legendre(0.0, np.pi, max(2, nodes // 2)))
            else:
                axes.append(gauss_legendre(0.0, 2 * np.pi, nodes))
        grids = np.meshgrid(*[ax[0] for ax in axes], indexing="ij")
        wgrids = np.meshgrid(*[ax[1] for ax in axes], indexing="ij")
        angles = np.stack([g.ravel() for g in grids], axis=1)
        weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
        return angles, np.ones(angles.shape[0]), weights * self.area_element(angles)


@dataclass(frozen=True)
class SigmaPoint:
    """Σ 上の点の (r, X₁, X₂, s) 表示"""
    r: float
    omega_plus: np.ndarray
    omega_minus: np.ndarray
    s: float = 0.0


class Quadric:
    """
    Σ_C = {Σ λ_j x_j² = C}

    Args:
        lambdas: 正の成分を先頭に並べた非零の λ
        level: 定数 C
    """

    def __init__(self, lambdas, level: float):
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.level = float(level)
        self.n = len(self.lambdas)
        self.k = int(np.sum(self.lambdas > 0))
        if np.any(self.lambdas == 0):
            raise SliceError("λ に 0 が含まれています")
        if np.any(self.lambdas[:self.k] <= 0):
            raise SliceError(f"λ は正の成分を先頭に並べてください: {self.lambdas}")
        self.plus = EllipsoidFactor(np.abs(self.lambdas[:self.k]))
        self.minus = EllipsoidFactor(np.abs(self.lambdas[self.k:]))

    @property
    def is_empty(self) -> bool:
        """実点を持たない、または原点のみのスライス"""
        c = self.level
        if self.k == self.n:
            return c <= 0
        if self.k == 0:
            return c >= 0
        return False

    @property
    def is_mixed(self) -> bool:
        return 0 < self.k < self.n

    def require_mixed(self):
        if not self.is_mixed:
            raise SliceError(f"符号が混在しない λ={self.lambdas} の Σ パラメータ表示は扱いません")

    @property
    def radial_factor(self) -> str:
        """r が直接掛かる因子（'minus'、'plus'、錐なら 'both'）"""
        if self.level > 0:
            return "minus"
        if self.level < 0:
            return "plus"
        return "both"

    @property
    def signed_radius(self) -> bool:
        """r が掛かる因子が S⁰ のとき r は ℝ 全体を動ける"""
        if self.level > 0:
            return self.minus.dim == 1
        if self.level < 0:
            return self.plus.dim == 1
        return False

    def residual(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.sum(self.lambdas * x ** 2, axis=1) - self.level

    def check_on_slice(self, x):
        x = np.atleast_2d(x)
        scale = np.maximum(1.0, np.sum(np.abs(self.lambdas) * x ** 2, axis=1))
        bad = np.abs(self.residual(x)) > ON_SLICE_TOL * scale
        if np.any(bad):
            raise OffSliceError(f"Σλx² = {self.level} から外れています (残差 {self.residual(x)[bad][0]:.3e})")

    def _scales(self, r):
        """(X₁ の係数, X₂ の係数, その r 微分)"""
        r = np.asarray(r, dtype=float)
        c = self.level
        if c > 0:
            a = np.sqrt(r ** 2 + c)
            return a, r, r / a, np.ones_like(r)
        if c < 0:
            b = np.sqrt(r ** 2 - c)
            return r, b, np.ones_like(r), r / b
        return r, r, np.ones_like(r), np.ones_like(r)

    def assemble(self, r, omega_plus, omega_minus) -> np.ndarray:
        """(r, X₁, X₂) から x (N, n) を組み立てる"""
        self.require_mixed()
        r = np.atleast_1d(np.asarray(r, dtype=float))
        p, q, _, _ = self._scales(r)
        return np.concatenate([p[:, None] * np.atleast_2d(omega_plus),
                               q[:, None] * np.atleast_2d(omega_minus)], axis=1)

    def radial_power(self, r) -> np.ndarray:
        """体積形式の冪因子（括弧の根号を除いた部分）"""
        r = np.abs(np.asarray(r, dtype=float))
        p, q, _, _ = self._scales(r)
        return np.abs(p) ** (self.plus.dim - 1) * np.abs(q) ** (self.minus.dim - 1)

    def volume_form(self, r, omega_plus, omega_minus) -> np.ndarray:
        """dr dS⁻ dS⁺ あたりの Σ_C の体積密度"""
        self.require_mixed()
        r = np.atleast_1d(np.asarray(r, dtype=float))
        _, _, dp, dq = self._scales(r)
        n1 = self.plus.normal_component(omega_plus)
        n2 = self.minus.normal_component(omega_minus)
        return self.radial_power(r) * np.sqrt((dp * n1) ** 2 + (dq * n2) ** 2)

    def volume_bound(self, x) -> np.ndarray:
        """冪因子の上界 (Σ λ_j² x_j²)^{(n−2)/2}"""
        x = np.atleast_2d(x)
        return np.sum(self.lambdas ** 2 * x ** 2, axis=1) ** ((self.n - 2) / 2)

    def radial_reach(self, radius: float, a1, a2) -> np.ndarray:
        """
        a₁p(r)² + a₂q(r)² ≤ radius² となる r の上限（要素ごと。届かなければ 0）

        a₁, a₂ は X₁, X₂ の（重み付き）ノルム²。p², q² は r² の1次式なので直接解ける。
        """
        a1 = np.asarray(a1, dtype=float)
        a2 = np.asarray(a2, dtype=float)
        c = self.level
        r_sq = (radius ** 2 - max(c, 0.0) * a1 - max(-c, 0.0) * a2) / (a1 + a2)
        return np.sqrt(np.maximum(r_sq, 0.0))

    def support_radius(self, radius: float, omega_plus, omega_minus) -> float:
        """与えた楕円体上の点の組 (X₁, X₂) のどれかで |x| ≤ radius となる r の上限"""
        a1 = np.sum(np.atleast_2d(omega_plus) ** 2, axis=1)[:, None]
        a2 = np.sum(np.atleast_2d(omega_minus) ** 2, axis=1)[None, :]
        return float(np.max(self.radial_reach(radius, a1, a2)))

    # --- チャート -------------------------------------------------------------

    @property
    def chart_dim(self) -> int:
        return 1 + self.plus.n_angles + self.minus.n_angles

    def chart_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo_p, hi_p = self.plus.angle_bounds()
        lo_m, hi_m = self.minus.angle_bounds()
        r_lo = -np.inf if self.signed_radius else 0.0
        return (np.concatenate([[r_lo], lo_p, lo_m]),
                np.concatenate([[np.inf], hi_p, hi_m]))

    def _split(self, u_sigma):
        u = np.asarray(u_sigma, dtype=float)
        kp = self.plus.n_angles
        return u[0], u[1:1 + kp], u[1 + kp:]

    def _factor_points(self, u: np.ndarray, branch):
        kp = self.plus.n_angles
        ap, am = u[:, 1:1 + kp], u[:, 1 + kp:]
        count = u.shape[0]
        x1 = self.plus.points(ap, np.full(count, float(branch[0])))
        x2 = self.minus.points(am, np.full(count, float(branch[1])))
        return ap, am, x1, x2

    def chart_points(self, u_sigma, branch=(1.0, 1.0)) -> np.ndarray:
        """u_σ を (M, n−1) に並べた一括版 → (M, n)"""
        u = np.atleast_2d(np.asarray(u_sigma, dtype=float))
        _, _, x1, x2 = self._factor_points(u, branch)
        return self.assemble(u[:, 0], x1, x2)

    def chart_point(self, u_sigma, branch=(1.0, 1.0)) -> np.ndarray:
        """Σ チャート u_σ = (r, 角⁺, 角⁻) → x"""
        return self.chart_points(np.asarray(u_sigma, dtype=float)[None, :], branch)[0]

    def chart_jacobians(self, u_sigma, branch=(1.0, 1.0)) -> np.ndarray:
        """∂x/∂u_σ の一括版 (M, n, n−1)"""
        u = np.atleast_2d(np.asarray(u_sigma, dtype=float))
        ap, am, x1, x2 = self._factor_points(u, branch)
        t1 = self.plus.tangents(ap)
        t2 = self.minus.tangents(am)
        p, q, dp, dq = self._scales(u[:, 0])
        kp, km = t1.shape[2], t2.shape[2]
        jac = np.zeros((u.shape[0], self.n, 1 + kp + km))
        jac[:, :self.k, 0] = dp[:, None] * x1
        jac[:, self.k:, 0] = dq[:, None] * x2
        jac[:, :self.k, 1:1 + kp] = p[:, None, None] * t1
        jac[:, self.k:, 1 + kp:] = q[:, None, None] * t2
        return jac

    def chart_jacobian(self, u_sigma, branch=(1.0, 1.0)) -> np.ndarray:
        """∂x/∂u_σ (n, n−1)"""
        return self.chart_jacobians(np.asarray(u_sigma, dtype=float)[None, :], branch)[0]

    def chart_density(self, u_sigma, branch=(1.0, 1.0)) -> float:
        """閉形式の体積形式 × 両楕円体の面積要素（u_σ に関する密度）"""
        r, ap, am = self._split(u_sigma)
        x1 = self.plus.points(ap[None, :], [branch[0]])
        x2 = self.minus.points(am[None, :], [branch[1]])
        vol = self.volume_form([r], x1, x2)[0]
        return float(vol * self.plus.area_element(ap[None, :])[0]
                     * self.minus.area_element(am[None, :])[0])

    def orientations(self, u_sigma, branch=(1.0, 1.0)) -> np.ndarray:
        """det[∂x/∂u_σ | λ⊙x] の符号 (M,)"""
        x = self.chart_points(u_sigma, branch)
        mat = np.concatenate([self.chart_jacobians(u_sigma, branch), (self.lambdas * x)[:, :, None]], axis=2)
        return np.where(np.linalg.det(mat) >= 0, 1.0, -1.0)

    def orientation(self, u_sigma, branch=(1.0, 1.0)) -> float:
        return float(self.orientations(np.asarray(u_sigma, dtype=float)[None, :], branch)[0])

    def chart_coordinates(self, x) -> Tuple[np.ndarray, Tuple[float, float]]:
        """
        点 x ∈ Σ_C からチャート座標と枝（S⁰ 因子の符号）を逆算

        Returns:
            (u_σ, (符号⁺, 符号⁻))
        """
        self.require_mixed()
        x = np.asarray(x, dtype=float)
        self.check_on_slice(x)
        xp, xm = x[:self.k], x[self.k:]
        rp = np.sqrt(np.sum(self.plus.weights * xp ** 2))
        rm = np.sqrt(np.sum(self.minus.weights * xm ** 2))
        c = self.level
        if c > 0:
            r, x1, x2 = rm, xp / rp, (xm / rm if rm > 0 else self._pole(self.minus))
        elif c < 0:
            r, x1, x2 = rp, (xp / rp if rp > 0 else self._pole(self.plus)), xm / rm
        else:
            r, x1, x2 = rm, xp / rp, xm / rm
        ap, sp = self.plus.angles_of(x1)
        am, sm = self.minus.angles_of(x2)
        if self.signed_radius:
            # S⁰ 因子の符号を r に吸収して枝を + に揃える
            if c > 0:
                r, sm = r * sm, 1.0
            else:
                r, sp = r * sp, 1.0
        return np.concatenate([[r], ap, am]), (sp, sm)

    @staticmethod
    def _pole(factor: EllipsoidFactor) -> np.ndarray:
        e = np.zeros(factor.dim)
        e[-1] = 1.0 / np.sqrt(factor.weights[-1])
        return e

    def sigma_point(self, p: SigmaPoint) -> np.ndarray:
        return self.assemble([p.r], p.omega_plus, p.omega_minus)[0]

    def sample_chart(self, rng: np.random.Generator, count: int, r_max: float = 2.0,
                     margin: float = 0.15) -> List[Tuple[np.ndarray, Tuple[float, float]]]:
        """
        ランダムなチャート点 (u_σ, 枝) を生成

        極角は端から margin 以上離し、r は [margin, r_max] から取る。
        """
        self.require_mixed()
        out = []
        for _ in range(count):
            r = rng.uniform(margin, r_max)
            if self.signed_radius and rng.random() < 0.5:
                r = -r
            angles = []
            for factor in (self.plus, self.minus):
                for a in range(factor.n_angles):
                    if a < factor.n_angles - 1:
                        angles.append(rng.uniform(margin, np.pi - margin))
                    else:
                        angles.append(rng.uniform(0.0, 2 * np.pi))
            branch = (1.0 if self.plus.dim > 1 else float(rng.choice([-1.0, 1.0])),
                      1.0 if self.minus.dim > 1 else float(rng.choice([-1.0, 1.0])))
            out.append((np.concatenate([[r], angles]), branch))
        return out
