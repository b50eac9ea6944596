from __future__ import annotations

import argparse
import logging
import math
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

from checks import run_selftest
from config import (
    KESTEN_TOL,
    N_MAX_DEFAULT,
    POWER_TOL,
    SELFTEST_INSTANCES,
    SELFTEST_SEED,
    TOOL_NAME,
    TOOL_VERSION,
    Precision,
    resolve_threads,
)
from core.constructions import (
    finite_group_suite,
    free_group_family,
    interval_example,
    unbounded_union_example,
)
from core.constructions.appendix import TruncationFamily
from core.errors import GroupoidError, NumericalError
from core.file_loader import describe_groupoid, load_groupoid, load_kernel
from core.groupoid import FiniteGroupoid, UnitSet, validate
from core.kernels import Kernel
from core.markov import assemble, export_coo, norm_sandwich_report, operator_norm_p
from core.spectral import EXTRAPOLATION_METHODS, e_spectral_radius, kesten_check
from core.walks import ReturnEstimate, estimate_return
from utils.output_tools import RunManifest, emit_error, format_json, render_csv, write_text
from utils.path_tools import ensure_output_path
from utils.rational_tools import format_scalar

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID_INPUT = 2
EXIT_NUMERICAL = 3

DESCRIPTION = """
Invariant Markov operators on finite p.m.p. groupoids: norms, E-spectral radius,
Kesten's criterion, reproduction of the unbounded-operator examples and a free-group contrast.
"""


# --- Ayudantes comunes ---

def _precision(args: argparse.Namespace) -> Precision:
    return "rational" if args.exact else "float"


def _manifest(args: argparse.Namespace, inputs: Sequence[str] = (), **parameters: Any) -> RunManifest:
    command = args.command if args.command != "reproduce" else f"reproduce {args.target}"
    return RunManifest(
        command=command,
        parameters=parameters,
        inputs=[str(p) for p in inputs],
        precision=_precision(args),
    )


def _emit(args: argparse.Namespace, text: str, default_name: str) -> None:
    """Escribe el resultado en ``-o`` (archivo o directorio) o en la salida estándar."""
    destination = ensure_output_path(args.output, default_name)
    write_text(text, destination)
    if destination is not None:
        logger.info("wrote %s", destination)


def _emit_json(args: argparse.Namespace, payload: Dict[str, Any], default_name: str) -> None:
    _emit(args, format_json(payload) + "\n", default_name)


def _load_inputs(args: argparse.Namespace) -> Tuple[FiniteGroupoid, Kernel]:
    groupoid = load_groupoid(args.groupoid)
    kernel = load_kernel(args.kernel, groupoid, _precision(args))
    return groupoid, kernel


def _unit_set(groupoid: FiniteGroupoid, raw: Optional[str]) -> UnitSet:
    """``--set a,b,c`` o todas las unidades."""
    if not raw:
        return UnitSet.everything(groupoid)
    return UnitSet.from_ids(groupoid, [u.strip() for u in raw.split(",") if u.strip()])


# --- Flujos ---

def validate_flow(args: argparse.Namespace) -> int:
    """Comprueba los axiomas de un archivo de grupoide."""
    groupoid = load_groupoid(args.groupoid, check=False)
    diagnostics = [d.to_dict() for d in validate(groupoid)]
    if not groupoid.normalized:
        diagnostics.append(
            {"axiom": "normalization", "message": f"total mass is {groupoid.total_mass}, expected 1", "witness": []}
        )
    valid = not diagnostics
    _emit_json(
        args,
        {
            "manifest": _manifest(args, [args.groupoid]).to_dict(),
            "groupoid": describe_groupoid(groupoid, args.groupoid),
            "valid": valid,
            "diagnostics": diagnostics,
        },
        "validate.json",
    )
    return EXIT_OK if valid else EXIT_INVALID_INPUT


def norm_flow(args: argparse.Namespace) -> int:
    """Normas ``‖π‖₂ ≤ ‖P^π‖ ≤ ‖π‖_I`` y, en ``L¹``/``L^∞``, las exactas."""
    groupoid, kernel = _load_inputs(args)
    threads = resolve_threads(args.threads)
    sandwich = norm_sandwich_report(groupoid, kernel, method=args.method, tol=args.tol, threads=threads)
    op = assemble(groupoid, kernel)
    manifest = _manifest(args, [args.groupoid, args.kernel], method=args.method, tol=args.tol)

    if args.export_coo:
        destination = ensure_output_path(args.export_coo, "operator.csv")
        export_coo(op, destination, manifest)

    _emit_json(
        args,
        {
            "manifest": manifest.to_dict(),
            **sandwich.to_dict(),
            "l1_norm": format_scalar(operator_norm_p(op, 1)),
            "linf_norm": format_scalar(operator_norm_p(op, math.inf)),
            "probability_field": kernel.is_probability_field,
            "symmetric": kernel.is_symmetric,
        },
        "norm.json",
    )
    return EXIT_OK if sandwich.ordered else EXIT_CHECK_FAILED


def radius_flow(args: argparse.Namespace) -> int:
    """Sucesión ``r_n`` del radio espectral relativo a ``E``."""
    groupoid, kernel = _load_inputs(args)
    unit_set = _unit_set(groupoid, args.set)
    report = e_spectral_radius(
        groupoid,
        kernel,
        unit_set,
        n_max=args.nmax,
        threads=resolve_threads(args.threads),
        extrapolation=args.extrapolation,
    )
    manifest = _manifest(
        args,
        [args.groupoid, args.kernel],
        set=unit_set.labels(groupoid),
        nmax=args.nmax,
        extrapolation=args.extrapolation,
    )

    if args.format == "json":
        _emit_json(args, {"manifest": manifest.to_dict(), **report.to_dict(), "r_seq": report.r_seq}, "radius.json")
    else:
        _emit(args, render_csv(("n", "return_probability_2n", "r_n"), report.to_rows(), manifest), "radius.csv")
    logger.info("rho_E extrapolated %.12f, operator norm %.12f", report.rho_extrapolated, report.operator_norm)
    return EXIT_OK


def kesten_flow(args: argparse.Namespace) -> int:
    """Veredicto de Kesten para cada conjunto invariante de masa positiva."""
    groupoid, kernel = _load_inputs(args)
    report = kesten_check(groupoid, kernel, tol=args.tol, threads=resolve_threads(args.threads))
    manifest = _manifest(args, [args.groupoid, args.kernel], tol=args.tol)

    if args.format == "csv":
        _emit(args, render_csv(("units", "mass", "norm", "passed"), report.to_rows(), manifest), "kesten.csv")
    else:
        _emit_json(args, {"manifest": manifest.to_dict(), **report.to_dict()}, "kesten.json")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def walk_flow(args: argparse.Namespace) -> int:
    """Estimación de Monte Carlo de la probabilidad de retorno."""
    groupoid, kernel = _load_inputs(args)
    unit_set = _unit_set(groupoid, args.set)
    estimate = estimate_return(
        groupoid,
        kernel,
        unit_set,
        steps=args.steps,
        samples=args.samples,
        seed=args.seed,
        threads=resolve_threads(args.threads),
    )
    manifest = _manifest(
        args,
        [args.groupoid, args.kernel],
        set=unit_set.labels(groupoid),
        steps=args.steps,
        samples=args.samples,
        seed=args.seed,
    )
    _emit(args, render_csv(ReturnEstimate.HEADER, [estimate.to_row()], manifest), "walk.csv")
    return EXIT_OK


def _family_csv(args: argparse.Namespace, family: TruncationFamily, **parameters: Any) -> None:
    manifest = _manifest(args, **parameters)
    _emit(args, render_csv(family.header(), family.to_rows(), manifest), f"{family.name}.csv")


def reproduce_flow(args: argparse.Namespace) -> int:
    """Regenera las tablas de las construcciones."""
    precision = _precision(args)
    if args.target == "appendix-a":
        family = unbounded_union_example(args.nmax, args.delta, precision=precision, build_union=False)
        _family_csv(args, family, nmax=args.nmax, delta=args.delta)
        return EXIT_OK if family.strictly_increasing() else EXIT_CHECK_FAILED

    if args.target == "appendix-b":
        family = interval_example(args.kmax)
        _family_csv(args, family, kmax=args.kmax)
        return EXIT_OK if all(r.extra["exact"] for r in family.rows) else EXIT_CHECK_FAILED

    if args.target == "free-group":
        family = free_group_family(args.gens, args.radius, args.method)
        _family_csv(args, family, gens=args.gens, radius=args.radius, method=args.method)
        return EXIT_OK

    # finite-suite
    rows: List[Tuple[Any, ...]] = []
    passed = True
    for preset in finite_group_suite(precision):
        report = kesten_check(preset.groupoid, preset.kernel, tol=args.tol, threads=resolve_threads(args.threads))
        norm = max(e.norm for e in report.entries)
        rows.append((preset.name, preset.groupoid.n_units, preset.groupoid.n_arrows, f"{norm:.12f}", report.passed))
        passed = passed and report.passed
    manifest = _manifest(args, tol=args.tol)
    _emit(args, render_csv(("preset", "units", "arrows", "norm", "passed"), rows, manifest), "finite-suite.csv")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def selftest_flow(args: argparse.Namespace) -> int:
    """Ejecuta la batería completa de invariantes."""
    report = run_selftest(args.instances, args.seed, constructions=not args.quick, monte_carlo=not args.quick)
    _emit_json(args, {"manifest": _manifest(args, instances=args.instances, seed=args.seed).to_dict(), **report.to_dict()}, "selftest.json")
    if not report.passed:
        print("Selftest failed; see the indicators above.", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# --- Analizador de argumentos ---

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--exact", action="store_true", help="Use exact rational arithmetic where supported")
    common.add_argument("--threads", type=int, default=None, help="Worker threads (falls back to GGK_THREADS, then 1)")
    common.add_argument("-o", "--output", default=None, help="Output file or directory (default: stdout)")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging on stderr")

    parser = argparse.ArgumentParser(prog=TOOL_NAME, description=DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    def _with_inputs(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("groupoid", help="Groupoid spec (JSON)")
        sub.add_argument("kernel", help="Kernel spec (JSON)")
        return sub

    sub = commands.add_parser("validate", parents=[common], help="Check the groupoid axioms of a spec file")
    sub.add_argument("groupoid", help="Groupoid spec (JSON)")
    sub.set_defaults(func=validate_flow)

    sub = _with_inputs("norm", "Norm sandwich ||pi||_2 <= ||P|| <= ||pi||_I")
    sub.add_argument("--method", choices=("exact", "power"), default="exact")
    sub.add_argument("--tol", type=float, default=POWER_TOL)
    sub.add_argument("--export-coo", default=None, help="Also write the operator entries as CSV to this path")
    sub.set_defaults(func=norm_flow)

    sub = _with_inputs("radius", "E-spectral radius sequence r_n")
    sub.add_argument("--set", default=None, help="Comma-separated unit ids of E (default: all units)")
    sub.add_argument("--nmax", type=int, default=N_MAX_DEFAULT)
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument("--extrapolation", choices=EXTRAPOLATION_METHODS, default="aitken")
    sub.set_defaults(func=radius_flow)

    sub = _with_inputs("kesten", "Kesten check on every invariant set")
    sub.add_argument("--tol", type=float, default=KESTEN_TOL)
    sub.add_argument("--format", choices=("csv", "json"), default="json")
    sub.set_defaults(func=kesten_flow)

    sub = _with_inputs("walk", "Monte Carlo return probability")
    sub.add_argument("--steps", type=int, required=True)
    sub.add_argument("--samples", type=int, required=True)
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--set", default=None, help="Comma-separated unit ids of E (default: all units)")
    sub.set_defaults(func=walk_flow)

    reproduce = commands.add_parser("reproduce", help="Regenerate construction tables")
    targets = reproduce.add_subparsers(dest="target", required=True)
    sub = targets.add_parser("appendix-a", parents=[common], help="Unbounded disjoint-union example")
    sub.add_argument("--nmax", type=int, default=25)
    sub.add_argument("--delta", default="1/10")
    sub = targets.add_parser("appendix-b", parents=[common], help="Interval-partition example")
    sub.add_argument("--kmax", type=int, default=40)
    sub = targets.add_parser("free-group", parents=[common], help="Truncated free-group walks")
    sub.add_argument("--gens", type=int, default=2)
    sub.add_argument("--radius", type=int, default=12)
    sub.add_argument("--method", choices=("auto", "explicit", "radial"), default="auto")
    sub = targets.add_parser("finite-suite", parents=[common], help="Kesten check on the finite group presets")
    sub.add_argument("--tol", type=float, default=KESTEN_TOL)
    reproduce.set_defaults(func=reproduce_flow)

    sub = commands.add_parser("selftest", parents=[common], help="Run the invariant suite")
    sub.add_argument("--instances", type=int, default=SELFTEST_INSTANCES)
    sub.add_argument("--seed", type=int, default=SELFTEST_SEED)
    sub.add_argument("--quick", action="store_true", help="Skip the constructions and Monte Carlo cells")
    sub.set_defaults(func=selftest_flow)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Punto de entrada principal que procesa argumentos."""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except FileNotFoundError as exc:
        emit_error({"error": "file_not_found", "message": str(exc), "details": {}})
        return EXIT_INVALID_INPUT
    except NumericalError as exc:
        emit_error(exc.to_dict())
        return EXIT_NUMERICAL
    except GroupoidError as exc:
        emit_error(exc.to_dict())
        return EXIT_INVALID_INPUT
    except (ValueError, ZeroDivisionError) as exc:
        emit_error({"error": "invalid_input", "message": str(exc), "details": {}})
        return EXIT_INVALID_INPUT


if __name__ == "__main__":
    sys.exit(main())
