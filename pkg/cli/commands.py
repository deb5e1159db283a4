"""
サブコマンドの実装
各 cmd_* は RunConfig とコマンド固有の引数（argparse.Namespace）を受け取り、終了コードを返す。
レポート本文は標準出力へ、ログは標準エラーへ出す。
"""
import logging
import math
import os
from dataclasses import asdict
from typing import Dict, List, Optional

import numpy as np

from core import brakke, integer_family, ode_family
from core.brakke import GridResolution, TestFunction
from core.config import RunConfig
from core.database import Database
from core.errors import (AngleUnwrapError, ConfigError, DegenerateFrameError,
                         ModulusCollapseError, NoReturnError, QuadratureError,
                         RefinementError)
from core.geometry import (angle_laplacian, lagrangian_angle,
                           laplace_beltrami_of_position, mean_curvature,
                           normal_projection, symplectic_pairing, tangent_frame)
from core.integer_family import IntegerFamily, IntegerSlice, LambdaSpec, classify
from core.ode_family import OdeFamily, PeriodicOrbit, SeedRecord
from core.run_manager import RunManager

from . import reports
from .reports import CheckRecord

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

SIGN_LABELS = {"-": "C<0", "0": "C=0", "+": "C>0"}

# 不変量チェックの閾値
LIMITS = {
    "symplectic_residual": 1e-9,
    "angle_error": 1e-8,
    "angle_laplacian": 1e-5,
    "h_norm_sq": 1e-4,
    "self_similarity": 1e-5,
    "special_curvature": 1e-6,
    "density_oracle": 1e-5,
    "laplace_beltrami": 1e-4,
    "volume_bound": 1.0,
}
ODE_ANGLE_LIMIT = 1e-5
CLOSURE_LIMIT = 1e-6
DRIFT_LIMIT = 1e-8
PERIODICITY_LIMIT = 1e-6


# --- 構築ヘルパ ------------------------------------------------------------------

def lambda_spec(run: RunConfig, strict: bool = False) -> LambdaSpec:
    return LambdaSpec(tuple(run.lambdas), strict_integer=strict)


def load_orbit(run: RunConfig) -> PeriodicOrbit:
    """周期初期値ファイルから λ が一致するレコードを選び、周期軌道を再確認する"""
    seeds = ode_family.load_seeds(run.seed_file)
    matches = [s for s in seeds if len(s.lambdas) == len(run.lambdas)
               and np.allclose(s.lambdas, run.lambdas)]
    if not matches:
        raise ConfigError(f"{run.seed_file} に λ={run.lambdas} の周期初期値がありません")
    record = matches[0]
    if record.alpha != run.alpha:
        logger.info("周期初期値の α=%g を使います（指定値 %g）", record.alpha, run.alpha)
    return ode_family.find_periodic(record.params(), record.state(), tol=run.tol,
                                    period_hint=record.period_hint)


def build_family(run: RunConfig):
    if run.family == "integer":
        return IntegerFamily(lambda_spec(run))
    return OdeFamily(load_orbit(run))


def build_phi(run: RunConfig, n: int) -> TestFunction:
    if run.phi_center:
        center = tuple(complex(run.phi_center[2 * j], run.phi_center[2 * j + 1]) for j in range(n))
    else:
        center = tuple([0j] * n)
    return TestFunction(center, run.phi_radius, run.phi_amplitude)


def grid_resolution(run: RunConfig) -> GridResolution:
    return GridResolution(run.r_panels, run.r_order, run.angle_nodes, run.s_nodes)


def _manager(args) -> Optional[RunManager]:
    db_path = getattr(args, "db_path", None)
    if not db_path:
        return None
    db = Database(db_path)
    db.initialize()
    return RunManager(db)


# --- classify --------------------------------------------------------------------

def cmd_classify(run: RunConfig, args) -> int:
    """位相・向き・連結性・埋め込み性の表示"""
    spec = lambda_spec(run, strict=True)
    signs = [args.csign] if getattr(args, "csign", None) else ["-", "0", "+"]
    results = [classify(spec, sign) for sign in signs]
    for r in results:
        print(r.summary() if len(signs) == 1 else f"{SIGN_LABELS[r.c_sign]}: {r.summary()}")
    if spec.is_special:
        print("special Lagrangian (sum = 0)")
    if getattr(args, "json", None):
        reports.write_json(args.json, "classify", {
            "lambdas": list(spec.lambdas),
            "special": spec.is_special,
            "reports": [r.to_dict() for r in results],
        })
    return EXIT_OK


# --- verify ----------------------------------------------------------------------

def _wrap(angle: float) -> float:
    return float(np.mod(angle + math.pi, 2 * math.pi) - math.pi)


def _verify_slices(family, run: RunConfig) -> List:
    if isinstance(family, IntegerFamily) and family.spec.is_special:
        slices = [IntegerSlice.at_level(family.spec, -1.0), IntegerSlice.at_level(family.spec, 1.0)]
    else:
        slices = [family.slice(-run.t0), family.slice(run.t0)]
    mixed = [s for s in slices if s.quadric.is_mixed]
    if not mixed:
        raise ConfigError(f"λ={run.lambdas} は符号が混在せず、チャートで検証できません")
    return mixed


def measure_sample(slice_, u_sigma, branch, s: float, inject_bug: bool = False) -> Dict[str, float]:
    """
    1標本点での不変量の残差

    inject_bug=True なら自己相似性チェックで H の符号を反転する（陰性対照）。
    """
    integer = isinstance(slice_, IntegerSlice)
    family_module = integer_family if integer else ode_family
    imm = family_module.chart(slice_, branch)
    u = np.concatenate([u_sigma, [s]])
    frame = tangent_frame(imm, u)
    metric = frame.metric()
    out = {}

    scale = max(1.0, float(np.max(np.abs(metric.entries))))
    out["symplectic_residual"] = float(np.max(np.abs(symplectic_pairing(frame)))) / scale
    out["angle_error"] = abs(_wrap(lagrangian_angle(frame) - imm.angle_hint(u)))

    curvature = mean_curvature(imm, u)
    x = slice_.quadric.chart_point(u_sigma, branch)
    if integer:
        closed = integer_family.density_closed_form(slice_, x)
    else:
        closed = ode_family.density_closed_form_ode(slice_, x, s)
    measured = float(np.sum(np.abs(curvature) ** 2))
    if closed.h_norm_sq > 1e-12:
        out["h_norm_sq"] = abs(measured - closed.h_norm_sq) / closed.h_norm_sq
    else:
        out["h_norm_sq"] = math.sqrt(measured)

    used = -curvature if inject_bug else curvature
    perp = normal_projection(imm, u)
    level = slice_.level
    norm = float(np.linalg.norm(perp) + np.linalg.norm(curvature))
    if integer and slice_.spec.is_special:
        out["special_curvature"] = float(np.linalg.norm(curvature))
    elif integer:
        residual = perp + (level / slice_.spec.total) * used
        out["self_similarity"] = float(np.linalg.norm(residual)) / norm
    else:
        residual = slice_.params.alpha * perp - level * used
        out["self_similarity"] = float(np.linalg.norm(residual)) / norm

    gram = math.sqrt(metric.determinant)
    expected = family_module.chart_density(slice_, u, branch)
    out["density_oracle"] = abs(gram - expected) / expected

    laplacian = laplace_beltrami_of_position(imm, u)
    out["laplace_beltrami"] = float(np.linalg.norm(laplacian - curvature)) / (1.0 + float(np.linalg.norm(curvature)))

    if integer:
        out["angle_laplacian"] = abs(angle_laplacian(imm, u))
        quadric = slice_.quadric
        if quadric.n >= 3 and np.all(np.abs(quadric.lambdas) >= 1):
            out["volume_bound"] = float(quadric.radial_power([u_sigma[0]])[0] / quadric.volume_bound(x)[0])
    return out


def _orbit_checks(orbit: PeriodicOrbit, slice_) -> List[CheckRecord]:
    """周期軌道そのものの検査（閉じ残差、保存量、r_j の上下界、密度の周期性）"""
    checks = []
    closure = orbit.closure()
    checks.append(CheckRecord("closure_residual", closure, CLOSURE_LIMIT, closure < CLOSURE_LIMIT))
    span = orbit.forward.s_end
    drift = orbit.forward.q_drift / span
    checks.append(CheckRecord("conserved_drift_per_unit_s", drift, DRIFT_LIMIT, drift < DRIFT_LIMIT))
    reduced = orbit.forward.integral_drift / span
    checks.append(CheckRecord("first_integral_drift_per_unit_s", reduced, DRIFT_LIMIT, reduced < DRIFT_LIMIT))
    bounded = bool(np.all(orbit.r_min > 0) and np.all(np.isfinite(orbit.r_max)))
    checks.append(CheckRecord("modulus_bounds", float(np.min(orbit.r_min)), 0.0, bounded,
                              f"r in [{np.min(orbit.r_min):.6g}, {np.max(orbit.r_max):.6g}]"))

    rng = np.random.default_rng(1)
    samples = slice_.quadric.sample_chart(rng, 8)
    x = np.array([slice_.quadric.chart_point(u, b) for u, b in samples])
    s = np.linspace(0.0, 0.9 * orbit.pad, 16)
    worst = 0.0
    for xi in x:
        xs = np.repeat(xi[None, :], len(s), axis=0)
        _, h0, d0 = slice_.field(xs, s)
        _, h1, d1 = slice_.field(xs, s + orbit.period)
        worst = max(worst, float(np.max(np.abs(d1 - d0))),
                    float(np.max(np.abs(np.sum(np.abs(h1) ** 2, axis=1) - np.sum(np.abs(h0) ** 2, axis=1)))))
    checks.append(CheckRecord("density_periodicity", worst, PERIODICITY_LIMIT, worst < PERIODICITY_LIMIT))
    return checks


def run_invariant_suite(family, run: RunConfig, samples: int, inject_bug: bool = False) -> List[CheckRecord]:
    """全スライスで標本点を取り、各不変量の最大残差を CheckRecord にまとめる"""
    rng = np.random.default_rng(run.random_seed)
    slices = _verify_slices(family, run)
    per_slice = max(1, samples // len(slices))
    maxima: Dict[str, float] = {}
    skipped = 0
    for slice_ in slices:
        s_lo, s_hi = slice_.s_range
        for u_sigma, branch in slice_.quadric.sample_chart(rng, per_slice):
            s = float(rng.uniform(s_lo, s_hi))
            try:
                values = measure_sample(slice_, u_sigma, branch, s, inject_bug)
            except (DegenerateFrameError, AngleUnwrapError) as e:
                logger.debug("標本点を飛ばします: %s", e)
                skipped += 1
                continue
            for key, value in values.items():
                maxima[key] = max(maxima.get(key, 0.0), value)

    checks = []
    for key, value in maxima.items():
        limit = LIMITS[key]
        if key == "angle_error" and isinstance(family, OdeFamily):
            limit = ODE_ANGLE_LIMIT
        passed = value <= limit if key == "volume_bound" else value < limit
        checks.append(CheckRecord(key, value, limit, passed))
    total = per_slice * len(slices)
    checks.append(CheckRecord("skipped_samples", float(skipped), 0.01 * total, skipped <= 0.01 * total,
                              f"{total - skipped}/{total} evaluated"))
    if isinstance(family, OdeFamily):
        checks.extend(_orbit_checks(family.orbit, slices[0]))
    return checks


def cmd_verify(run: RunConfig, args) -> int:
    """幾何学的不変量のスイート"""
    family = build_family(run)
    samples = args.samples if getattr(args, "samples", None) else run.samples
    checks = run_invariant_suite(family, run, samples, getattr(args, "inject_bug", False))
    for check in checks:
        print(check.line())
    passed = all(c.passed for c in checks)
    verdict = "PASS" if passed else "FAIL"
    print(f"verdict: {verdict}")

    reports.write_json(os.path.join(run.output_dir, "verify.json"), "verify", {
        "family": family.describe(),
        "samples": samples,
        "inject_bug": bool(getattr(args, "inject_bug", False)),
        "checks": [c.to_dict() for c in checks],
        "verdict": verdict,
    })
    manager = _manager(args)
    if manager:
        run_id = manager.start_run("verify", run.to_dict())
        manager.finish(run_id, verdict)
    if not passed:
        for c in checks:
            if not c.passed:
                logger.error("不変量チェック失敗: %s", c.line())
    return EXIT_OK if passed else EXIT_FAIL


# --- brakke ----------------------------------------------------------------------

def _limit_lines(report: brakke.LimitReport) -> List[str]:
    lines = [f"cone variation: {report.cone.variation:.10g} (error {report.cone.error_estimate:.2e})"]
    for side in report.sides:
        label = "t->0-" if side.sign < 0 else "t->0+"
        if side.limit is None:
            lines.append(f"{label}: non-monotone tail, no extrapolation")
        else:
            lines.append(f"{label}: limit {side.limit:.10g} (order {side.fit.order}, "
                         f"+/- {side.fit.error:.2e}), rate {side.rate:.4f}, "
                         f"relative error {side.relative_error:.3e}"
                         + ("" if side.converged else ", not converged"))
    return lines


def cmd_brakke(run: RunConfig, args) -> int:
    """質量・第一変分の表と極限判定"""
    family = build_family(run)
    phi = build_phi(run, family.n)
    resolution = grid_resolution(run)
    payload = {
        "family": family.describe(),
        "phi": {"center": list(phi.center), "radius": phi.radius, "amplitude": phi.amplitude},
        "grid": resolution.label(),
    }
    lines: List[str] = []
    records: List[Dict] = []
    try:
        if family.n == 2 and float(phi.value(np.zeros((1, 2)))[0]) != 0.0:
            times = brakke.dyadic_times(run.t0, max(run.levels, 6), -1)
            probe = brakke.log_divergence_probe(family, phi, times, resolution, run.workers, run.quad_tol)
            records = [r.to_dict() for r in probe.records]
            payload["log_probe"] = probe.to_dict()
            lines.append("log-divergent, slope>0" if probe.divergent else "no logarithmic divergence detected")
            lines.append(f"slope: {probe.slope:.10g}")
            lines.append(f"correlation: {probe.correlation:.6f}")
            lines.append(f"abscissa a: {probe.abscissa:.6g}")
            lines.append(f"transport term converging: {'yes' if probe.transport_converging else 'no'} "
                         f"(step ratio {probe.transport_rate:.3f})")
            verdict = "LOG-DIVERGENT" if probe.divergent and probe.transport_converging else "FAIL"
        else:
            report = brakke.limit_check(family, phi, run.t0, run.levels, resolution,
                                        run.limit_tol, run.workers, quad_tol=run.quad_tol)
            records = [r.to_dict() for r in report.records]
            payload["limit"] = report.to_dict()
            lines.extend(_limit_lines(report))
            verdict = report.verdict
            flows = []
            for t in (run.t_values or brakke.default_flow_times(run.t0)):
                flow = brakke.flow_identity(family, phi, t, resolution=resolution, workers=run.workers,
                                            tol=run.flow_tol)
                flows.append(flow.to_dict())
                lines.append(f"flow identity t={t:g}: dmass/dt {flow.mass_rate:.10g}, "
                             f"variation {flow.variation:.10g}, error {flow.absolute_error:.3e} "
                             f"of scale {flow.scale:.3e} {flow.status}")
                if not flow.passed and verdict == "PASS":
                    verdict = "FAIL"
            payload["flow_identity"] = flows
    except QuadratureError as e:
        logger.error("求積が収束しません: %s", e)
        lines.append(f"quadrature did not converge: {e}")
        verdict = "INCONCLUSIVE"

    payload["verdict"] = verdict
    reports.write_records_csv(os.path.join(run.output_dir, "brakke.csv"), records)
    reports.write_json(os.path.join(run.output_dir, "brakke.json"), "brakke",
                       dict(payload, records=records))
    for line in reports.format_table(records):
        print(line)
    for line in lines:
        print(line)
    print(f"verdict: {verdict}")

    manager = _manager(args)
    if manager:
        run_id = manager.start_run("brakke", run.to_dict())
        manager.record(run_id, records)
        manager.finish(run_id, verdict)
    return EXIT_OK if verdict in ("PASS", "LOG-DIVERGENT") else EXIT_FAIL


# --- export ----------------------------------------------------------------------

def export_points(slice_, size: int, extent: float = 2.0, cone_floor: float = 0.05) -> np.ndarray:
    """
    (r × s) 格子上のはめ込み点 (size, size, n)

    残りの角は中央値（極角 π/2、方位角 π）に固定する。r の範囲は √|C| に比例し、
    錐では頂点を除いて [cone_floor·extent, extent] とする。
    """
    quadric = slice_.quadric
    quadric.require_mixed()
    level = abs(quadric.level)
    if level == 0:
        radii = np.linspace(cone_floor * extent, extent, size)
    else:
        top = extent * math.sqrt(level)
        radii = np.linspace(-top, top, size) if quadric.signed_radius else np.linspace(0.0, top, size)
    angles = []
    for factor in (quadric.plus, quadric.minus):
        for a in range(factor.n_angles):
            angles.append(math.pi / 2 if a < factor.n_angles - 1 else math.pi)
    x = np.array([quadric.chart_point(np.concatenate([[r], angles])) for r in radii])
    s_lo, s_hi = slice_.s_range
    s = np.linspace(s_lo, s_hi, size)
    position, _, _ = slice_.field(np.repeat(x, size, axis=0), np.tile(s, size))
    return position.reshape(size, size, quadric.n)


def cmd_export(run: RunConfig, args) -> int:
    """OBJ メッシュと点群 CSV の書き出し"""
    family = build_family(run)
    t = args.t if getattr(args, "t", None) is not None else -run.t0
    slice_ = family.slice(t)
    points = export_points(slice_, args.grid, args.extent)
    projection = reports.load_projection(args.projection, family.n) if getattr(args, "projection", None) else None
    mesh = reports.grid_mesh(points, projection)
    stem = getattr(args, "name", None) or f"{family.kind}_t{t:+.6g}"
    obj_path = reports.write_obj(os.path.join(run.output_dir, stem + ".obj"), mesh, group_name=stem)
    cloud_path = reports.write_point_cloud(os.path.join(run.output_dir, stem + "_points.csv"),
                                           points.reshape(-1, family.n))
    print(f"mesh: {obj_path} ({len(mesh.vertices)} vertices, {len(mesh.faces)} quads)")
    print(f"points: {cloud_path}")
    return EXIT_OK


# --- ode-find --------------------------------------------------------------------

def _describe_orbit(orbit: PeriodicOrbit) -> str:
    lam = ",".join(f"{v:g}" for v in orbit.params.lambdas)
    return (f"lambda=({lam}) alpha={orbit.params.alpha:g} T={orbit.period:.12g} "
            f"closure={orbit.closure_residual:.3e} "
            f"r in [{np.min(orbit.r_min):.6g}, {np.max(orbit.r_max):.6g}]")


def cmd_ode_find(run: RunConfig, args) -> int:
    """周期軌道の再確認・剛体解からの構成・探索"""
    seeds = ode_family.load_seeds(run.seed_file) if os.path.exists(run.seed_file) else []
    if getattr(args, "rigid", None):
        winding = [int(v) for v in args.rigid.split(",")]
        params, state, period = ode_family.rigid_seed(run.lambdas, winding, run.alpha)
        candidates = [(params, state, period)]
    elif getattr(args, "lambdas", None) is None and getattr(args, "n", None):
        seed = ode_family.select_seed(seeds, args.n, getattr(args, "k", None))
        candidates = [(seed.params(), seed.state(), seed.period_hint)]
    else:
        wanted = getattr(args, "lambdas", None)
        candidates = [(s.params(), s.state(), s.period_hint) for s in seeds
                      if wanted is None or (len(s.lambdas) == len(run.lambdas)
                                            and np.allclose(s.lambdas, run.lambdas))]
    if not candidates:
        raise ConfigError("対象の周期初期値がありません")

    found: List[PeriodicOrbit] = []
    failures = 0
    for params, state, period in candidates:
        if getattr(args, "search", False):
            if abs(ode_family.balance(params, np.abs(state.w))) > 1e-6:
                print(f"skip lambda={params.lambdas}: not a rigid seed")
                continue
            denominator = getattr(args, "max_denominator", 40)
            found.extend(ode_family.search_periodic(params, state, args.amplitudes, tol=run.tol,
                                                    max_denominator=denominator,
                                                    trust_radius=run.trust_radius))
            continue
        try:
            found.append(ode_family.find_periodic(
                params, state, tol=run.tol, s_max=None if period else run.s_max,
                return_tol=run.return_tol, trust_radius=run.trust_radius, period_hint=period))
        except (NoReturnError, RefinementError, ModulusCollapseError) as e:
            failures += 1
            print(f"FAIL lambda={params.lambdas}: {e}")

    for orbit in found:
        print(_describe_orbit(orbit))
    if getattr(args, "save", False) and found:
        ode_family.save_seeds(run.seed_file, list(seeds) + [SeedRecord.from_orbit(o) for o in found])
        print(f"saved {len(found)} seed(s) to {run.seed_file}")
    reports.write_json(os.path.join(run.output_dir, "ode_find.json"), "ode-find", {
        "orbits": [asdict(SeedRecord.from_orbit(o)) for o in found],
        "closure_residuals": [o.closure_residual for o in found],
        "failures": failures,
    })
    return EXIT_OK if found and failures == 0 else EXIT_FAIL


# --- history ---------------------------------------------------------------------

def cmd_history(run: RunConfig, args) -> int:
    """アーカイブ済みの実行一覧"""
    manager = _manager(args)
    if manager is None:
        print("run archive is disabled")
        return EXIT_OK
    if getattr(args, "delete", None):
        ok = manager.delete_run(args.delete)
        print(f"deleted {args.delete}" if ok else f"could not delete {args.delete}")
        return EXIT_OK if ok else EXIT_FAIL
    if getattr(args, "run_id", None):
        for line in reports.format_table(manager.get_run_records(args.run_id)):
            print(line)
        return EXIT_OK
    for r in manager.get_all_runs():
        print(f"{r['id']}  {r['command']:<8} {r['verdict'] or '-':<13} {r['created_at']}")
    return EXIT_OK


COMMANDS = {
    "classify": cmd_classify,
    "verify": cmd_verify,
    "brakke": cmd_brakke,
    "export": cmd_export,
    "ode-find": cmd_ode_find,
    "history": cmd_history,
}
