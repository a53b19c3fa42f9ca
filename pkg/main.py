import argparse
import json
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv
from pydantic import ValidationError

from app.config import config as app_config
from app.control.qp import QpSolverError
from app.schemas.scenario import Scenario
from app.services.ccm_codec_service import write_golden_vectors
from app.services.trace_service import export_trace, summarize_trace
from app.services.v2v_bus_service import BusSynchronyError
from app.tasks.mpc_tasks import ControllerError
from app.tasks.simulation_tasks import run_scenario
from app.utils.validators import apply_overrides, format_error_location

load_dotenv()

EXIT_PASS = 0
EXIT_UNSAFE = 1
EXIT_INVALID = 2
EXIT_FAILURE = 3


def resolve_scenario_path(name: str) -> Path:
    """A file path, or the name of a bundled preset such as ``scenario1``."""
    path = Path(name)
    if path.exists():
        return path
    preset = app_config.PRESETS_DIR / f"{name.removesuffix('.json')}.json"
    if preset.exists():
        return preset
    raise FileNotFoundError(f"No scenario file or preset named '{name}'")


def load_validated_scenario(
    name: str, overrides: list[str] | None = None, seed: int | None = None
) -> Scenario:
    """
    Read a scenario, apply overrides and validate it.

    Raises:
        FileNotFoundError: Neither a file nor a preset matches
        ValueError: The file is not JSON or an override does not resolve
        ValidationError: The scenario content is invalid
    """
    path = resolve_scenario_path(name)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: not valid JSON ({e})") from e
    raw = apply_overrides(raw, overrides or [])
    if seed is not None:
        raw["seed"] = seed
    return Scenario.model_validate(raw)


def report_validation_error(e: ValidationError) -> None:
    for error in e.errors():
        location = format_error_location(error["loc"]) or "<root>"
        print(f"Invalid scenario at {location}: {error['msg']}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        scenario = load_validated_scenario(args.scenario, args.override, args.seed)
    except ValidationError as e:
        report_validation_error(e)
        return EXIT_INVALID
    except (OSError, ValueError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INVALID

    try:
        trace = run_scenario(scenario)
    except (QpSolverError, ControllerError, BusSynchronyError, ValueError) as e:
        logging.error(f"❌ Scenario '{scenario.name}' failed: {e}")
        return EXIT_FAILURE

    out_dir = Path(args.out) if args.out else app_config.OUTPUT_DIR / scenario.name
    try:
        export_trace(trace, out_dir)
    except OSError as e:
        logging.error(f"❌ Could not write the trace to {out_dir}: {e}")
        return EXIT_FAILURE

    summary = summarize_trace(trace)
    print(summary.model_dump_json())
    if summary.passed:
        logging.info(f"✅ Minimum distance {summary.min_dist} m >= {summary.d_safe} m")
        return EXIT_PASS
    logging.warning(f"⚠️ Minimum distance {summary.min_dist} m < {summary.d_safe} m")
    return EXIT_UNSAFE


def cmd_validate(args) -> int:
    try:
        scenario = load_validated_scenario(args.scenario, args.override)
    except ValidationError as e:
        report_validation_error(e)
        return EXIT_INVALID
    except (OSError, ValueError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INVALID

    logging.info(f"✅ Scenario '{scenario.name}' is valid ({len(scenario.agents)} agents)")
    return EXIT_PASS


def cmd_ccm_vectors(args) -> int:
    try:
        write_golden_vectors(args.out_path)
    except OSError as e:
        logging.error(f"❌ Could not write CCM vectors: {e}")
        return EXIT_FAILURE
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Distributed MPC intersection coordination simulator"
    )
    parser.add_argument(
        "--log-level",
        default=app_config.LOG_LEVEL,
        help="Logging level (default from DMPC_LOG_LEVEL)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run a scenario file or preset")
    run.add_argument("scenario", help="Scenario JSON file or preset name")
    run.add_argument("--out", help="Output directory for the trace")
    run.add_argument("--seed", type=int, help="Override the scenario seed")
    run.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Dotted scenario path, e.g. agents.1.v_ref=15 (agent id after 'agents')",
    )
    run.set_defaults(func=cmd_run)

    validate = subparsers.add_parser("validate", help="Validate a scenario file")
    validate.add_argument("scenario", help="Scenario JSON file or preset name")
    validate.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    validate.set_defaults(func=cmd_validate)

    vectors = subparsers.add_parser("ccm-vectors", help="Write golden CCM byte vectors")
    vectors.add_argument("out_path", help="Output JSON file")
    vectors.set_defaults(func=cmd_ccm_vectors)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_PASS

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
