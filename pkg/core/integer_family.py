"""
整数族モジュール
F(x, s) = (x_1 e^{iλ_1 s}, …, x_n e^{iλ_n s})、x ∈ Σ_t = {Σλ_j x_j² = −2tΣλ_j}
閉形式の密度・平均曲率、Σ_t のパラメータ表示、位相分類を提供する。
"""
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import OffSliceError, SliceError
from .geometry import Immersion, as_batch
from .quadric import Quadric, SigmaPoint

logger = logging.getLogger(__name__)

VERTEX_TOL = 1e-12


@dataclass(frozen=True)
class LambdaSpec:
    """
    λ ベクトル

    Attributes:
        lambdas: 非零の λ。正の成分を先頭に並べる
        strict_integer: True なら整数以外を拒否する
    """
    lambdas: Tuple[float, ...]
    strict_integer: bool = True

    def __post_init__(self):
        values = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", values)
        if len(values) < 2:
            raise ValueError(f"λ は2成分以上必要です: {values}")
        if any(v == 0 for v in values):
            raise ValueError(f"λ に 0 は使えません: {values}")
        k = sum(1 for v in values if v > 0)
        if any(v <= 0 for v in values[:k]):
            raise ValueError(f"λ は正の成分を先頭に並べてください: {values}")
        if self.strict_integer and not all(float(v).is_integer() for v in values):
            raise ValueError(f"整数モードでは λ は整数に限ります: {values}")

    @classmethod
    def parse(cls, text: str, strict_integer: bool = True, reorder: bool = False) -> "LambdaSpec":
        """'1,1,-1' 形式の文字列から作る。reorder=True なら正の成分を前に寄せる"""
        try:
            values = [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise ValueError(f"λ を解釈できません: {text!r}") from None
        if reorder:
            values = [v for v in values if v > 0] + [v for v in values if v <= 0]
        return cls(tuple(values), strict_integer=strict_integer)

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
    def total(self) -> float:
        return float(sum(self.lambdas))

    @property
    def sum_positive(self) -> bool:
        return self.total > 0

    @property
    def is_integral(self) -> bool:
        return all(float(v).is_integer() for v in self.lambdas)

    @property
    def is_special(self) -> bool:
        """Σλ = 0 なら特殊ラグランジュ"""
        return self.total == 0

    def label(self) -> str:
        return ",".join(f"{v:g}" for v in self.lambdas)


@dataclass(frozen=True)
class IntegerSlice:
    """
    時刻 t のスライス V_t（C = −2tΣλ）

    Σλ = 0 のときは t に依存しないので at_level で C を直接指定する（t は None）。
    """
    spec: LambdaSpec
    t: Optional[float]
    level: float
    quadric: Quadric = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.t is not None and self.level != -2.0 * self.t * self.spec.total:
            raise SliceError(f"C={self.level} と t={self.t} が C = −2tΣλ を満たしません")
        object.__setattr__(self, "quadric", Quadric(self.spec.array, self.level))

    @classmethod
    def at_time(cls, spec: LambdaSpec, t: float) -> "IntegerSlice":
        return cls(spec, float(t), -2.0 * float(t) * spec.total)

    @classmethod
    def at_level(cls, spec: LambdaSpec, level: float) -> "IntegerSlice":
        if not spec.is_special:
            raise SliceError("at_level は Σλ = 0 の族専用です。at_time を使ってください")
        return cls(spec, None, float(level))

    @property
    def kind(self) -> str:
        if self.t is None:
            return "special"
        if self.t < 0:
            return "shrinker"
        if self.t > 0:
            return "expander"
        return "cone"

    @property
    def s_range(self) -> Tuple[float, float]:
        return 0.0, math.pi

    @property
    def velocity_factor(self) -> float:
        """法速度 = velocity_factor · H"""
        return 1.0

    def moduli_sq(self, s: np.ndarray) -> np.ndarray:
        """|e^{iλ_j s}|² = 1"""
        return np.ones((len(np.atleast_1d(s)), self.spec.n))

    # --- 求積用のベクトル化された場 --------------------------------------

    def field(self, x: np.ndarray, s: np.ndarray):
        """
        節点ごとの (F, h, ラドン密度因子) を返す

        Args:
            x: Σ 上の点 (N, n)
            s: 円パラメータ (N,)
        """
        lam = self.spec.array
        phase = np.exp(1j * np.outer(s, lam))
        position = x * phase
        weight = np.sum(lam ** 2 * x ** 2, axis=1)
        h = -(self.spec.total / weight)[:, None] * (lam * x) * phase
        return position, h, np.sqrt(weight)


@dataclass(frozen=True)
class DensityTriple:
    position_norm_sq: float
    h_norm_sq: float
    radon_density: float


@dataclass(frozen=True)
class TopologyReport:
    """位相分類の結果"""
    lambdas: Tuple[float, ...]
    c_sign: str
    topology: str
    oriented: bool
    components: int
    embedded: bool
    special: bool

    def summary(self) -> str:
        parts = [
            self.topology,
            "orientable" if self.oriented else "non-orientable",
            "connected" if self.components == 1 else "two components",
            "embedded" if self.embedded else "immersed",
        ]
        return ", ".join(parts)

    def to_dict(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "c_sign": self.c_sign,
            "topology": self.topology,
            "oriented": self.oriented,
            "components": self.components,
            "embedded": self.embedded,
            "special": self.special,
        }


def immerse(slice_: IntegerSlice, x, s: float) -> np.ndarray:
    """
    F(x, s) = (x_j e^{iλ_j s})

    Raises:
        OffSliceError: x が Σ_t 上にない
    """
    x = np.asarray(x, dtype=float)
    slice_.quadric.check_on_slice(x)
    return x * np.exp(1j * slice_.spec.array * s)


def psi(spec: LambdaSpec, x) -> np.ndarray:
    """λ_j が奇数の成分の符号を反転する"""
    if not spec.is_integral:
        raise SliceError("ψ は整数の λ でのみ定義されます")
    odd = np.array([int(v) % 2 == 1 for v in spec.lambdas])
    return np.where(odd, -np.asarray(x, dtype=float), np.asarray(x, dtype=float))


def fold(spec: LambdaSpec, x, s: float) -> Tuple[np.ndarray, float]:
    """
    (x, s) を s ∈ [0, π) の代表元に写す

    F(x, s + π) = F(ψ(x), s) を繰り返し使う。
    """
    turns = math.floor(s / math.pi)
    x = np.asarray(x, dtype=float)
    if turns % 2:
        x = psi(spec, x)
    return x, s - turns * math.pi


def _require_off_vertex(x: np.ndarray):
    if np.linalg.norm(x) <= VERTEX_TOL:
        raise SliceError("錐の頂点 x = 0 では密度が定義されません")


def density_closed_form(slice_: IntegerSlice, x) -> DensityTriple:
    """
    閉形式の (|V_t|², |h|², ラドン密度因子)

    |h|² = (Σλ_j)² / Σλ_j²x_j²、密度因子 √(Σλ_j²x_j²)（dS_t ds あたり）
    """
    x = np.asarray(x, dtype=float)
    slice_.quadric.check_on_slice(x)
    _require_off_vertex(x)
    lam = slice_.spec.array
    weight = float(np.sum(lam ** 2 * x ** 2))
    return DensityTriple(
        position_norm_sq=float(np.sum(x ** 2)),
        h_norm_sq=slice_.spec.total ** 2 / weight,
        radon_density=math.sqrt(weight),
    )


def mean_curvature_closed(slice_: IntegerSlice, x, s: float) -> np.ndarray:
    """H = −(Σλ/Σλ²x²)(λ_j x_j e^{iλ_j s})"""
    x = np.asarray(x, dtype=float)
    _require_off_vertex(x)
    _, h, _ = slice_.field(x[None, :], np.array([s]))
    return h[0]


def sigma_parametrize(slice_: IntegerSlice, p: SigmaPoint) -> np.ndarray:
    x = slice_.quadric.sigma_point(p)
    slice_.quadric.check_on_slice(x)
    return x


def volume_form_closed(slice_: IntegerSlice, p: SigmaPoint) -> float:
    """dr dS⁻ dS⁺ あたりの Σ_t の体積密度"""
    return float(slice_.quadric.volume_form([p.r], p.omega_plus, p.omega_minus)[0])


def scale_between_slices(slice_a: IntegerSlice, slice_b: IntegerSlice, x_a) -> np.ndarray:
    """
    x_b = √(t_b/t_a)·x_a

    Raises:
        SliceError: t の符号が異なる、または λ が異なる
    """
    if slice_a.spec != slice_b.spec:
        raise SliceError("異なる λ のスライス間ではスケールできません")
    ta, tb = slice_a.t, slice_b.t
    if ta is None or tb is None or np.sign(ta) != np.sign(tb):
        raise SliceError(f"符号の異なる時刻間のスケーリングです: t_a={ta}, t_b={tb}")
    x_a = np.asarray(x_a, dtype=float)
    slice_a.quadric.check_on_slice(x_a)
    factor = 1.0 if ta == 0 else math.sqrt(tb / ta)
    return factor * x_a


def chart(slice_: IntegerSlice, branch=(1.0, 1.0)) -> Immersion:
    """
    u = (r, 角⁺, 角⁻, s) のはめ込みチャート（解析的ヤコビアン付き、点列で一括評価できる）

    向きは det[∂x/∂u_σ | λ⊙x] > 0 に揃え、角は (Σλ)s + π/2 になる。
    """
    quadric = slice_.quadric
    quadric.require_mixed()
    lam = slice_.spec.array
    lower, upper = quadric.chart_bounds()

    def evaluate(u):
        u, single = as_batch(u)
        out = quadric.chart_points(u[:, :-1], branch) * np.exp(1j * lam * u[:, -1:])
        return out[0] if single else out

    def derivative(u):
        u, single = as_batch(u)
        phase = np.exp(1j * lam * u[:, -1:])
        x = quadric.chart_points(u[:, :-1], branch)
        jac = quadric.chart_jacobians(u[:, :-1], branch) * phase[:, :, None]
        out = np.concatenate([jac, (1j * lam * x * phase)[:, :, None]], axis=2)
        return out[0] if single else out

    def orientation(u):
        u, single = as_batch(u)
        signs = quadric.orientations(u[:, :-1], branch)
        return float(signs[0]) if single else signs

    def angle_hint(u):
        return float(np.mod(slice_.spec.total * u[-1] + math.pi / 2, 2 * math.pi))

    return Immersion(
        dim_domain=slice_.spec.n,
        evaluate=evaluate,
        derivative=derivative,
        angle_hint=angle_hint,
        orientation=orientation,
        lower=np.concatenate([lower, [-np.inf]]),
        upper=np.concatenate([upper, [np.inf]]),
        name=f"integer[{slice_.spec.label()}] C={slice_.level:g}",
        batched=True,
    )


def chart_coordinates(slice_: IntegerSlice, x, s: float):
    """点 (x, s) に対するチャートパラメータ u と枝を返す"""
    u_sigma, branch = slice_.quadric.chart_coordinates(x)
    return np.concatenate([u_sigma, [s]]), branch


def chart_density(slice_: IntegerSlice, u, branch=(1.0, 1.0)) -> float:
    """閉形式の体積形式 × 面積要素 × ラドン因子（u に関する密度）"""
    x = slice_.quadric.chart_point(u[:-1], branch)
    radon = math.sqrt(float(np.sum(slice_.spec.array ** 2 * x ** 2)))
    return radon * slice_.quadric.chart_density(u[:-1], branch)


# --- 位相分類 ----------------------------------------------------------------

def _pairwise_coprime(values: Sequence[int]) -> bool:
    values = [abs(int(v)) for v in values]
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            if math.gcd(values[i], values[j]) != 1:
                return False
    return True


def _topology(n: int, k: int, c_sign: str) -> str:
    if k in (0, n):
        compact = (c_sign == "+" and k == n) or (c_sign == "-" and k == 0)
        return f"S^{n - 1} x S^1" if compact else ("point" if c_sign == "0" else "empty")
    if c_sign == "-":
        return f"R^{k} x S^{n - k - 1} x S^1"
    if c_sign == "+":
        return f"S^{k - 1} x R^{n - k} x S^1"
    return f"cone over S^{k - 1} x S^{n - k - 1} x S^1"


def classify(spec: LambdaSpec, c_sign: str) -> TopologyReport:
    """
    V_t の位相・向き付け可能性・連結性・埋め込み性を判定

    埋め込み性は十分条件のみ判定する（満たさなければ "immersed" と報告）。

    Args:
        spec: 整数の λ
        c_sign: '-', '0', '+' のいずれか（C の符号）

    Raises:
        SliceError: λ が整数でない
    """
    if c_sign not in ("-", "0", "+"):
        raise ValueError(f"C の符号は '-', '0', '+' のいずれかです: {c_sign!r}")
    if not spec.is_integral:
        raise SliceError("位相分類は整数の λ でのみ行えます")
    lam = [int(v) for v in spec.lambdas]
    n, k = spec.n, spec.k

    two = (c_sign == "+" and k == 1 and lam[0] % 2 == 0) or \
          (c_sign == "-" and k == n - 1 and lam[-1] % 2 == 0)

    embedded = _pairwise_coprime(lam)
    if c_sign == "+":
        embedded = embedded and all(v == 1 for v in lam[:k])
    elif c_sign == "-":
        embedded = embedded and all(v == -1 for v in lam[k:])

    return TopologyReport(
        lambdas=spec.lambdas,
        c_sign=c_sign,
        topology=_topology(n, k, c_sign),
        oriented=sum(lam) % 2 == 0,
        components=2 if two else 1,
        embedded=embedded,
        special=sum(lam) == 0,
    )


def gcd_all(values: Sequence[int]) -> int:
    return reduce(math.gcd, [abs(int(v)) for v in values])


class IntegerFamily:
    """λ を固定した整数族 {V_t}"""

    kind = "integer"

    def __init__(self, spec: LambdaSpec):
        self.spec = spec

    @property
    def n(self) -> int:
        return self.spec.n

    def slice(self, t: float) -> IntegerSlice:
        return IntegerSlice.at_time(self.spec, t)

    def describe(self) -> dict:
        return {"family": self.kind, "lambdas": list(self.spec.lambdas)}
