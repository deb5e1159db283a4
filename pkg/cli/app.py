"""
コマンドライン定義
argparse でサブコマンドを組み立て、RunConfig を作って commands に渡す。
"""
import argparse
import logging
import sys
from typing import List, Optional

from core.config import Config, RunConfig
from core.errors import ConfigError, LaglabError

from .commands import COMMANDS, EXIT_FAIL, EXIT_USAGE

logger = logging.getLogger(__name__)


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"数値のカンマ区切りではありません: {text!r}") from None


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig の JSON ファイル")
    common.add_argument("--family", choices=["integer", "ode"])
    common.add_argument("--lambdas", type=_float_list, help="例: --lambdas=1,1,-1")
    common.add_argument("--alpha", type=float)
    common.add_argument("--t0", type=float)
    common.add_argument("--output-dir")
    common.add_argument("--seed-file")
    common.add_argument("--workers", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--random-seed", type=int)
    common.add_argument("--no-archive", action="store_true", help="実行アーカイブに記録しない")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="laglab",
        description="Numerical laboratory for Lagrangian self-similar solutions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="topology of the integer family slices")
    p.add_argument("--csign", choices=["-", "0", "+"], help="sign of C (default: all three)")
    p.add_argument("--json", help="also write the reports to this JSON file")

    p = sub.add_parser("verify", parents=[common], help="geometric invariant suite")
    p.add_argument("--samples", type=int)
    p.add_argument("--inject-bug", action="store_true", help="flip the sign of H (negative control)")

    p = sub.add_parser("brakke", parents=[common], help="mass / first variation table and limit check")
    p.add_argument("--levels", type=int)
    p.add_argument("--t-values", type=_float_list)
    p.add_argument("--phi-radius", type=float)
    p.add_argument("--phi-amplitude", type=float)
    p.add_argument("--phi-center", type=_float_list, help="2n real coordinates x1,y1,x2,y2,...")
    p.add_argument("--r-panels", type=int)
    p.add_argument("--r-order", type=int)
    p.add_argument("--angle-nodes", type=int)
    p.add_argument("--s-nodes", type=int)
    p.add_argument("--limit-tol", type=float)
    p.add_argument("--flow-tol", type=float)
    p.add_argument("--quad-tol", type=float, help="relative tolerance of the grid-doubling error estimate")

    p = sub.add_parser("export", parents=[common], help="OBJ mesh and point cloud of one slice")
    p.add_argument("--t", type=float, help="time of the slice (default: -t0)")
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--extent", type=float, default=2.0)
    p.add_argument("--projection", help="CSV file with a 3 x 2n projection matrix")
    p.add_argument("--name", help="output file stem")

    p = sub.add_parser("ode-find", parents=[common], help="confirm or search periodic orbits")
    p.add_argument("--rigid", help="winding numbers m_j of a rigid orbit, e.g. 1,1,-3")
    p.add_argument("--search", action="store_true")
    p.add_argument("--amplitudes", type=_float_list, default=[0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5])
    p.add_argument("--max-denominator", type=int, default=40,
                   help="largest number of reduced periods in a closed orbit")
    p.add_argument("--n", type=int, help="pick a stored seed by dimension when no lambdas are given")
    p.add_argument("--k", type=int, help="pick a stored seed by number of positive lambdas")
    p.add_argument("--save", action="store_true", help="append found orbits to the seed file")

    p = sub.add_parser("history", parents=[common], help="list archived runs")
    p.add_argument("--run-id", help="print the records of one run")
    p.add_argument("--delete", metavar="RUN_ID")
    return parser


# フラグ名 → RunConfig のフィールド
_OVERRIDES = (
    "family", "lambdas", "alpha", "t0", "output_dir", "seed_file", "workers", "tol",
    "random_seed", "samples", "levels", "t_values", "phi_radius", "phi_amplitude",
    "phi_center", "r_panels", "r_order", "angle_nodes", "s_nodes", "limit_tol", "flow_tol",
    "quad_tol",
)


def build_run_config(args, config: Config) -> RunConfig:
    """設定ファイル（または Config の既定値）にコマンドラインの指定を重ねる"""
    run = RunConfig.load(args.config) if args.config else RunConfig.from_config(config)
    for name in _OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            setattr(run, name, value)
    run.validate()
    return run


def dispatch(args, config: Config) -> int:
    """
    サブコマンドを実行して終了コードを返す

    設定・入力の誤りは 2、検証の失敗と数値的な失敗は 1。
    """
    enabled = config.get("database.enabled", True)
    args.db_path = None if args.no_archive or not enabled else config.get("database.path")
    try:
        run = build_run_config(args, config)
        return COMMANDS[args.command](run, args)
    except (ConfigError, ValueError, LookupError) as e:
        logger.debug("入力エラー", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LaglabError as e:
        logger.debug("数値エラー", exc_info=True)
        print(f"FAIL: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


def parse_args(argv: Optional[List[str]] = None):
    return build_parser().parse_args(argv)
