from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

load_dotenv()

from asymptotics.tail import tail_asymptotic
from fields.covariance import default_radii, field_kernel, verify_d4_expansion
from fields.profiles import CovarianceModelError, FieldSpec, FieldSpecError, load_field_spec, structural_checks
from reports.writers import RunManifest, default_run_dir, write_bytes, write_frame_csv, write_json
from simulation.montecarlo import estimate_sup_tail, grid_for_threshold, ratio_experiment
from simulation.pickands import (
    PickandsConstant,
    estimate_pickands,
    estimate_pickands_domain,
    parse_pickands_constants,
    resolve_pickands,
)
from simulation.sampling import Grid, field_paths
from utils.settings import DIAGONAL_TOL, build_run_settings

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
D4_CHECK_FRACTIONS = (0.25, 0.5, 0.75)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _load_pickands_table(args: argparse.Namespace) -> Dict[float, PickandsConstant]:
    if not args.pickands:
        return {}
    source = Path(args.pickands)
    if not source.exists():
        raise FileNotFoundError(f"Pickands constants not found: {source}")
    data = json.loads(source.read_text(encoding="utf-8"))
    return parse_pickands_constants(data, use_slope=getattr(args, "pickands_use_slope", False))


def _d4_points(spec: FieldSpec) -> List[np.ndarray]:
    width = spec.T - spec.lower
    return [np.full(spec.k, spec.lower + fraction * width) for fraction in D4_CHECK_FRACTIONS]


def _d4_radii(spec: FieldSpec, point: np.ndarray) -> np.ndarray:
    room = float(np.min(spec.T - point)) * np.sqrt(spec.k)
    return np.array([r for r in default_radii() if r <= room])


@contextmanager
def _outputs_or_nothing(run_dir: Path) -> Iterator[List[str]]:
    """Collects output names; removes the ones already written if the block raises."""
    written: List[str] = []
    try:
        yield written
    except BaseException:
        for name in written:
            (run_dir / name).unlink(missing_ok=True)
        if written:
            logging.warning(f"Removed {len(written)} partial output(s) from {run_dir}")
        raise


def run_validate(args: argparse.Namespace, run_dir: Path) -> Tuple[int, List[str]]:
    spec = load_field_spec(args.spec)
    checks = [check.to_dict() for check in structural_checks(spec)]

    reports = []
    try:
        kernel = field_kernel(spec)
    except CovarianceModelError as exc:
        checks.insert(0, {"name": "D1", "passed": False, "detail": str(exc)})
        checks.append({"name": "D4", "passed": False, "detail": str(exc)})
    else:
        sample = np.stack(_d4_points(spec))
        diagonal = np.array([kernel(p, p) for p in sample])
        d1_ok = bool(np.all(np.abs(diagonal - 1.0) <= DIAGONAL_TOL))
        checks.insert(0, {"name": "D1", "passed": d1_ok, "detail": f"max |Var X(t) - 1| = {np.abs(diagonal - 1.0).max():.3g}"})

        for point in _d4_points(spec):
            report = verify_d4_expansion(spec, kernel, point, radii=_d4_radii(spec, point))
            reports.append(report.to_dict())
        d4_ok = all(report["converged"] for report in reports)
        checks.append({"name": "D4", "passed": d4_ok, "detail": f"{sum(r['converged'] for r in reports)}/{len(reports)} check points converged"})

    passed = all(check["passed"] for check in checks)
    for check in checks:
        log = logging.info if check["passed"] else logging.warning
        log(f"{check['name']}: {'pass' if check['passed'] else 'FAIL'} ({check['detail']})")
    write_json(run_dir / "validation.json", {"field": spec.to_dict(), "passed": passed, "checks": checks, "d4": reports})
    return (EXIT_OK if passed else EXIT_FAILURE), ["validation.json"]


def run_pickands(args: argparse.Namespace, run_dir: Path) -> Tuple[int, List[str]]:
    alphas = list(args.alpha)
    if len(alphas) == 1 and args.domain_extent is None:
        estimate = estimate_pickands(
            alphas[0],
            horizon=args.horizon,
            step=args.step,
            reps=args.reps,
            seed=args.seed,
            threads=args.threads,
            refine=args.refine,
        )
    else:
        extent = args.domain_extent if args.domain_extent is not None else 1.0
        grid = Grid.from_step(0.0, extent, args.step, k=len(alphas))
        estimate = estimate_pickands_domain(alphas, grid, reps=args.reps, seed=args.seed, threads=args.threads)
    logging.info(f"Pickands estimate {estimate.estimate:.6g} (se {estimate.std_error:.3g}, method {estimate.method})")
    write_json(run_dir / "pickands.json", estimate.to_dict())
    return EXIT_OK, ["pickands.json"]


def run_tail(args: argparse.Namespace, run_dir: Path) -> Tuple[int, List[str]]:
    spec = load_field_spec(args.spec)
    pickands = resolve_pickands(spec.alphas, _load_pickands_table(args))
    results = [tail_asymptotic(spec, pickands, u).to_dict() for u in args.u]
    for result in results:
        logging.info(f"u={result['u']:g}: {result['probability']:.6g} flags={result['flags']}")
    write_json(run_dir / "tail.json", {"field": spec.name, "pickands": [p.to_dict() for p in pickands], "results": results})
    return EXIT_OK, ["tail.json"]


def run_mc(args: argparse.Namespace, run_dir: Path) -> Tuple[int, List[str]]:
    spec = load_field_spec(args.spec)
    if args.step is not None:
        grid = Grid.from_step(spec.lower, spec.T, args.step, k=spec.k)
    else:
        grid = grid_for_threshold(spec, args.u)
    asymptotic = None
    try:
        pickands = resolve_pickands(spec.alphas, _load_pickands_table(args))
        asymptotic = tail_asymptotic(spec, pickands, args.u).probability
    except ValueError as exc:
        logging.warning(f"No asymptotic reference at u={args.u:g}: {exc}")
    estimate = estimate_sup_tail(
        spec,
        args.u,
        grid,
        args.reps,
        seed=args.seed,
        threads=args.threads,
        asymptotic=asymptotic,
        refine=args.refine,
        histogram=args.histogram,
    )
    with _outputs_or_nothing(run_dir) as outputs:
        write_json(run_dir / "mc.json", estimate.to_dict())
        outputs.append("mc.json")
        write_frame_csv(run_dir / "mc.csv", estimate.to_frame())
        outputs.append("mc.csv")
    return EXIT_OK, outputs


def run_ratio(args: argparse.Namespace, run_dir: Path) -> Tuple[int, List[str]]:
    spec = load_field_spec(args.spec)
    pickands = resolve_pickands(spec.alphas, _load_pickands_table(args))
    report = ratio_experiment(
        spec,
        args.u_list,
        args.reps,
        pickands,
        seed=args.seed,
        threads=args.threads,
        resolution_factor=args.resolution_factor,
        refine=args.refine,
    )
    with _outputs_or_nothing(run_dir) as outputs:
        write_frame_csv(run_dir / "ratio.csv", report.to_frame())
        outputs.append("ratio.csv")
        write_json(run_dir / "ratio.json", report.to_dict())
        outputs.append("ratio.json")
    return EXIT_OK, outputs


def run_sample(args: argparse.Namespace, run_dir: Path) -> Tuple[int, List[str]]:
    spec = load_field_spec(args.spec)
    grid = Grid.uniform(spec.lower, spec.T, args.points, k=spec.k)
    paths = field_paths(spec, grid, args.count, seed=args.seed)
    with _outputs_or_nothing(run_dir) as outputs:
        for path in paths:
            stem = f"sample_{path.stream:04d}"
            write_frame_csv(run_dir / f"{stem}.csv", path.to_frame())
            outputs.append(f"{stem}.csv")
            write_bytes(run_dir / f"{stem}.bin", path.to_bytes())
            outputs.append(f"{stem}.bin")
    return EXIT_OK, outputs


COMMANDS: Dict[str, Callable[[argparse.Namespace, Path], Tuple[int, List[str]]]] = {
    "validate": run_validate,
    "pickands": run_pickands,
    "tail": run_tail,
    "mc": run_mc,
    "ratio": run_ratio,
    "sample": run_sample,
}
INPUT_KEYS = ("spec", "pickands")
RUNTIME_KEYS = ("out", "verbose", "quiet", "command", "threads")


def _add_pickands_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--pickands", type=str, default=None, help="pickands.json or a {\"constants\": [...]} table")
    parser.add_argument(
        "--pickands-use-slope",
        action="store_true",
        help="take the slope estimate from a pickands.json record instead of the point estimate",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alpha-field-extremes", description="Extremes of alpha(t)-locally stationary Gaussian fields")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="run seed (overrides the environment)")
    common.add_argument("--threads", type=int, default=None, help="worker cap; results do not depend on it")
    common.add_argument("--out", type=str, default=None, help="run directory")
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate", parents=[common], help="check D1-D4, A1 and A2 for a field spec")
    validate.add_argument("spec")

    pickands = sub.add_parser("pickands", parents=[common], help="estimate a Pickands constant")
    pickands.add_argument("--alpha", type=float, nargs="+", required=True)
    pickands.add_argument("--horizon", type=float, default=None)
    pickands.add_argument("--step", type=float, default=0.01)
    pickands.add_argument("--reps", type=int, default=10_000)
    pickands.add_argument("--refine", action="store_true", help="add the step/2 Richardson diagnostic")
    pickands.add_argument("--domain-extent", type=float, default=None, help="edge of the box [0, S]^k for a vector alpha")

    tail = sub.add_parser("tail", parents=[common], help="evaluate the tail asymptotics")
    tail.add_argument("spec")
    tail.add_argument("--u", type=float, nargs="+", required=True)
    _add_pickands_options(tail)

    mc = sub.add_parser("mc", parents=[common], help="Monte Carlo supremum tail")
    mc.add_argument("spec")
    mc.add_argument("--u", type=float, required=True)
    mc.add_argument("--reps", type=int, default=100_000)
    mc.add_argument("--step", type=float, default=None, help="grid step (default: threshold-adaptive rule)")
    mc.add_argument("--refine", action="store_true", help="also estimate on the midpoint-refined grid")
    mc.add_argument("--histogram", action="store_true")
    _add_pickands_options(mc)

    ratio = sub.add_parser("ratio", parents=[common], help="Monte Carlo / asymptotic ratios")
    ratio.add_argument("spec")
    ratio.add_argument("--u-list", type=float, nargs="+", required=True)
    ratio.add_argument("--reps", type=int, default=100_000)
    ratio.add_argument("--resolution-factor", type=float, default=0.1)
    ratio.add_argument("--refine", action="store_true")
    _add_pickands_options(ratio)

    sample = sub.add_parser("sample", parents=[common], help="write sample paths")
    sample.add_argument("spec")
    sample.add_argument("--count", type=int, default=1)
    sample.add_argument("--points", type=int, default=64, help="nodes per axis")

    replay = sub.add_parser("replay", parents=[common], help="re-run a manifest")
    replay.add_argument("manifest")
    return parser


def _resolve_inputs(args: argparse.Namespace) -> Dict[str, str]:
    inputs = {}
    for key in INPUT_KEYS:
        value = getattr(args, key, None)
        if value:
            path = Path(value).resolve()
            setattr(args, key, str(path))
            inputs[key] = str(path)
    return inputs


def _parameters(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: value for key, value in sorted(vars(args).items()) if key not in RUNTIME_KEYS}


def execute(args: argparse.Namespace) -> int:
    settings = build_run_settings(args.seed, args.threads)
    args.seed = settings.seed
    args.threads = settings.threads
    inputs = _resolve_inputs(args)
    parameters = _parameters(args)
    run_dir = Path(args.out) if args.out else default_run_dir(args.command, parameters)

    started = time.perf_counter()
    code, outputs = COMMANDS[args.command](args, run_dir)
    manifest = RunManifest(
        command=args.command,
        inputs=inputs,
        parameters=parameters,
        seed=settings.seed,
        duration_seconds=round(time.perf_counter() - started, 3),
        outputs=outputs,
    )
    manifest.write(run_dir)
    logging.info(f"Outputs written to {run_dir}")
    return code


def replay(args: argparse.Namespace) -> int:
    manifest = RunManifest.load(args.manifest)
    if manifest.command not in COMMANDS:
        raise ValueError(f"manifest command '{manifest.command}' cannot be replayed")
    namespace = argparse.Namespace(**manifest.parameters)
    namespace.command = manifest.command
    namespace.seed = manifest.seed
    namespace.threads = args.threads
    namespace.out = args.out
    logging.info(f"Replaying '{manifest.command}' with seed {manifest.seed}")
    return execute(namespace)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        if args.command == "replay":
            return replay(args)
        return execute(args)
    except FieldSpecError as exc:
        for path, message in exc.issues:
            logging.error(f"{path}: {message}")
        return EXIT_USAGE
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        logging.error(f"{exc}")
        return EXIT_USAGE
    except (ValueError, RuntimeError) as exc:
        logging.error(f"An error occurred during execution: {exc}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
