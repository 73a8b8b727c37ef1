"""Command-line entry point for the secrecy-bounds toolkit."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from config import SecrecySettings
from logging_setup import configure_logging
from models.bccm_records import FeedbackMode
from models.quantizer_policy import ScenarioError
from models.scenario_file import ScenarioDocument, ScenarioFileError, load_scenario
from repositories.base_repository import BaseCurveRepository, CurveMetadata, CurveSaveError
from repositories.bounds_repository import BoundsCurveRepository, bounds_columns
from repositories.estimate_repository import EstimateRepository
from repositories.region_repository import RegionCurveRepository
from repositories.scaling_repository import ScalingRepository
from services.curves import CurveBuilder, ValidationFailure
from services.optimizer import InfeasibleTargetError, OptimizationFailureError
from services.quadrature import DegenerateConditioningError, InvalidIntervalError
from services.quantizer import ConstraintViolationError

DEFAULT_SCENARIO = Path(__file__).resolve().parent / "scenarios" / "default_rayleigh.toml"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def parse_sweep(text: str) -> list[float]:
	"""``a,b,c`` lists values; ``start:stop:step`` is an inclusive range."""
	text = text.strip()
	if ":" in text:
		parts = [float(part) for part in text.split(":")]
		if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
			raise argparse.ArgumentTypeError(f"invalid range sweep '{text}'")
		start, stop, step = parts
		count = int(round((stop - start) / step)) + 1
		return [start + index * step for index in range(count) if start + index * step <= stop + 1e-9]
	try:
		return [float(part) for part in text.split(",") if part.strip()]
	except ValueError as exc:
		raise argparse.ArgumentTypeError(f"invalid sweep '{text}'") from exc


def parse_ints(text: str) -> list[int]:
	try:
		return [int(float(value)) for value in parse_sweep(text)]
	except ValueError as exc:
		raise argparse.ArgumentTypeError(f"invalid integer list '{text}'") from exc


def build_parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(prog="secrecy", description="Finite-feedback secrecy-rate bounds and regions")
	common = argparse.ArgumentParser(add_help=False)
	common.add_argument("--scenario", type=Path, help="scenario TOML document")
	common.add_argument("--out", type=Path, help="CSV output path (stdout when omitted)")
	common.add_argument("--json", action="store_true", help="also write a JSON mirror with metadata")
	common.add_argument("--seed", type=int, help="seed for restarts and simulations")
	common.add_argument("--log-level", help="override LOG_LEVEL")
	common.add_argument("--workers", type=int, help="thread pool size for sweep points")
	commands = parser.add_subparsers(dest="command", required=True)

	cm = commands.add_parser("cm-bounds", parents=[common], help="common-message bounds over P")
	cm.add_argument("--sweep", type=parse_sweep, default=parse_sweep("0:40:5"), help="P_avg values in dB")
	cm.add_argument("--bits", type=parse_ints, help="feedback sizes b (default: the scenario's b)")

	im = commands.add_parser("im-bounds", parents=[common], help="independent-messages sum-rate bounds")
	im.add_argument("--sweep", type=parse_sweep, help="P_avg values in dB, or K values with --sweep-over K")
	im.add_argument("--sweep-over", choices=["P", "K"], default="P")
	im.add_argument("--bits", type=parse_ints, help="feedback sizes b (default: the scenario's b)")

	region = commands.add_parser("bccm-region", parents=[common], help="BCCM rate-region frontiers")
	region.add_argument("--mode", choices=[mode.value for mode in FeedbackMode], default=FeedbackMode.ERRORFREE.value)
	region.add_argument("--frontier-samples", type=int, default=33)
	region.add_argument("--epsilons", type=parse_sweep, help="erasure probabilities stacked in one output")
	region.add_argument("--redundant-bits", type=parse_ints, default=[1], help="indication-bit repetitions b")
	region.add_argument("--sweep", type=parse_sweep, help="P_avg values in dB (default: the scenario's)")
	region.add_argument("--high-snr", action="store_true", help="trace the high-SNR region instead")

	scaling = commands.add_parser("scaling", parents=[common], help="large-K scaling against log log K")
	scaling.add_argument("--k-list", type=parse_ints, default=[100, 1_000, 10_000, 100_000, 1_000_000])
	scaling.add_argument("--inner-log", choices=["natural", "log2"], default="natural")
	scaling.add_argument("--blocks", type=int, help="Monte Carlo blocks per estimate")

	validate = commands.add_parser("validate", parents=[common], help="Monte Carlo vs quadrature checks")
	validate.add_argument("--blocks", type=int, help="Monte Carlo blocks per estimate")
	validate.add_argument("--sigmas", type=float, default=3.0, help=argparse.SUPPRESS)
	return parser


def _output_path(args: argparse.Namespace, settings: SecrecySettings, digest: str) -> Optional[Path]:
	if args.out is not None:
		return args.out
	if args.json:
		return settings.output_directory / f"{args.command}-{digest[:12]}.csv"
	return None


def run(args: argparse.Namespace, settings: SecrecySettings, document: ScenarioDocument, logger) -> int:
	seed = args.seed if args.seed is not None else document.sim.seed if document.sim.seed is not None else settings.default_seed
	optimizer_overrides = {**document.optimizer_overrides(), "seed": seed}
	sim_overrides = {**document.sim_overrides(), "seed": seed}
	if getattr(args, "blocks", None):
		sim_overrides["num_blocks"] = args.blocks
	workers = args.workers or settings.workers
	scenario = document.to_scenario(seed=seed)
	builder = CurveBuilder(
		scenario,
		quadrature=document.quadrature_spec(settings.build_quadrature_spec()),
		optimizer_spec=settings.build_optimizer_spec(**optimizer_overrides),
		sim=settings.build_sim_config(**sim_overrides),
		workers=workers,
		logger=logger,
		scenario_id=document.label or document.scenario_hash[:12],
	)
	metadata = CurveMetadata(command=args.command, seed=seed, scenario_hash=document.scenario_hash)
	target = {
		"path": _output_path(args, settings, document.scenario_hash),
		"metadata": metadata,
		"json_mirror": args.json,
		"logger": logger,
	}
	bits = getattr(args, "bits", None) or [scenario.b]
	repository: BaseCurveRepository
	if args.command == "cm-bounds":
		records = builder.cm_bounds(args.sweep, bits)
		repository = BoundsCurveRepository(bounds_columns("P_avg_dB", bits), **target)
	elif args.command == "im-bounds":
		if args.sweep_over == "K":
			k_values = [int(value) for value in args.sweep] if args.sweep else [1, 2, 3, 5, 10, 20]
			records = builder.im_bounds(bits, k_values=k_values)
			repository = BoundsCurveRepository(bounds_columns("K", bits), **target)
		else:
			records = builder.im_bounds(bits, p_db=args.sweep or parse_sweep("0:40:5"))
			repository = BoundsCurveRepository(bounds_columns("P_avg_dB", bits, scenario.K), **target)
	elif args.command == "bccm-region":
		records = builder.bccm_region(
			FeedbackMode(args.mode),
			args.frontier_samples,
			epsilons=args.epsilons,
			redundant_bits=args.redundant_bits,
			p_db=args.sweep,
			high_snr=args.high_snr,
		)
		repository = RegionCurveRepository(**target)
	elif args.command == "scaling":
		records = builder.scaling(args.k_list, args.inner_log)
		repository = ScalingRepository(**target)
	else:
		checks = builder.validate(sigmas=args.sigmas)
		EstimateRepository(report_stderr=builder.sim.report_stderr, **target).save_many(checks)
		builder.require_valid(checks)
		return EXIT_OK
	repository.save_many(records)
	return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
	parser = build_parser()
	args = parser.parse_args(argv)
	settings = SecrecySettings()
	logger = configure_logging(args.log_level or settings.log_level, log_dir=settings.log_directory)
	scenario_path = args.scenario or settings.scenario_path or DEFAULT_SCENARIO
	try:
		document = load_scenario(scenario_path)
	except ScenarioFileError as file_error:
		logger.error("Scenario file %s rejected: %s", scenario_path, file_error)
		return EXIT_USAGE
	try:
		return run(args, settings, document, logger)
	except (ScenarioError, InvalidIntervalError, DegenerateConditioningError) as scenario_error:
		logger.error("Scenario rejected: %s", scenario_error)
		return EXIT_USAGE
	except (ConstraintViolationError, InfeasibleTargetError) as constraint_error:
		logger.error("Constraint violated: %s", constraint_error)
		return EXIT_FAILURE
	except OptimizationFailureError as optimizer_error:
		logger.error("Optimization failed: %s", optimizer_error)
		return EXIT_FAILURE
	except ValidationFailure as validation_error:
		logger.error("Validation failed for %s checks: %s", len(validation_error.failures), validation_error)
		return EXIT_FAILURE
	except CurveSaveError as save_error:
		logger.error("Failed to write curve output: %s", save_error)
		return EXIT_FAILURE


if __name__ == "__main__":
	sys.exit(main())
