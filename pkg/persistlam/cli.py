"""
Command-line front end: run | verify | sweep.

Exit status 0 when every configured check passes, 1 on numeric failures or
failed checks (the error is embedded in the report), 2 on schema errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from .config import settings
from .engine import execute, run_sweep, verify_outputs
from .errors import SchemaError
from .models import RunConfig
from .utils import setup_logging, validate_values

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_SCHEMA = 2


# ===========================================
# CONFIG LOADING
# ===========================================

def load_config(path: Path) -> RunConfig:
    """
    Parse and validate a run config.

    Raises:
        SchemaError: unreadable file, malformed JSON or schema violations
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read config: {exc.strerror}", {"path": str(path)}) from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", {"path": str(path), "line": exc.lineno,
                                                       "column": exc.colno}) from exc
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as exc:
        fields = [{"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]} for err in exc.errors()]
        raise SchemaError("config does not match the schema", {"path": str(path), "errors": fields}) from exc


def parse_values(raw: Optional[Sequence[str]]) -> Optional[List[str]]:
    """Accept '--values 0 0.005 0.01' as well as '--values 0,0.005,0.01'."""
    if raw is None:
        return None
    return [part for item in raw for part in item.split(",") if part.strip()]


# ===========================================
# PARSER
# ===========================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="persistlam",
                                     description="Persistent invariant laminations by graph transform")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, type=Path, help="run configuration (JSON)")
        p.add_argument("--out", type=Path, default=Path(settings.OUTPUT_DIR), help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker threads (overrides THREADS)")
        p.add_argument("--seed", type=int, default=None, help="root seed (overrides SEED and the config)")
        p.add_argument("--log-format", choices=("json", "text"), default=None)

    common(sub.add_parser("run", help="run a pipeline and its checks"))
    common(sub.add_parser("verify", help="re-run the checks against a previous output directory"))
    sweep = sub.add_parser("sweep", help="one run per value of a real parameter")
    common(sweep)
    sweep.add_argument("--param", default=None, help="scenario parameter to sweep")
    sweep.add_argument("--values", nargs="*", default=None, help="parameter values")
    return parser


# ===========================================
# COMMANDS
# ===========================================

def _run(args: argparse.Namespace) -> int:
    report = execute(load_config(args.config), args.out, threads=args.threads, seed=args.seed)
    return EXIT_OK if report.passed else EXIT_FAILED


def _verify(args: argparse.Namespace) -> int:
    report = verify_outputs(load_config(args.config), args.out, threads=args.threads, seed=args.seed)
    return EXIT_OK if report.passed else EXIT_FAILED


def _sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    param = args.param or (config.sweep.param if config.sweep else None)
    raw = parse_values(args.values)
    if raw is None:
        raw = list(config.sweep.values) if config.sweep else []
    if not param:
        raise SchemaError("sweep needs --param or a 'sweep' block in the config")
    is_valid, values, error = validate_values(raw)
    if not is_valid:
        raise SchemaError(error, {"param": param})
    _, ok = run_sweep(config, args.out, param, values, threads=args.threads, seed=args.seed)
    return EXIT_OK if ok else EXIT_FAILED


COMMANDS = {
    "run": _run,
    "verify": _verify,
    "sweep": _sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(fmt=args.log_format)

    ok, problems = settings.validate()
    if not ok:
        for problem in problems:
            logger.warning(f"settings: {problem}")

    try:
        return COMMANDS[args.command](args)
    except SchemaError as exc:
        logger.error(f"schema error: {exc}")
        print(json.dumps(exc.to_dict(), indent=2, sort_keys=True, default=str), file=sys.stderr)
        return EXIT_SCHEMA
