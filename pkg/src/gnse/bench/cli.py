"""Command line front end: ``gnse {solve,study,rates,infsup}``.

Exit codes: 0 on success, 2 when Newton fails to converge, 3 for invalid
configuration (including malformed arguments).
"""
import argparse
import csv
import logging
import os
import sys

import numpy as np

from ..exceptions import ConfigurationError, DomainError, MeshError, NonConvergenceError
from ..fem.space import ElementPair
from ..mesh import write_vtk
from ..solver import NewtonConfig
from .manufactured import ManufacturedCase, exponents
from .measures import dual_modular_diagnostic, error_norms, stability_quantity
from .study import (EocTable, LevelResult, WORKERS_ENV, emit_csv, infsup_probe, rates_curves,
                    run_study, solve_sequence)

EXIT_OK = 0
EXIT_NONCONVERGENCE = 2
EXIT_CONFIG = 3

log = logging.getLogger("gnse")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _p_list(text):
    try:
        values = [float(eval_fraction(s)) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid p list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty p list")
    return values


def eval_fraction(s):
    """Parse ``"1.5"`` or ``"4/3"``."""
    s = s.strip()
    if "/" in s:
        num, den = s.split("/", 1)
        return float(num) / float(den)
    return float(s)


def _p_value(text):
    try:
        return eval_fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid exponent {text!r}") from None


def build_parser():
    parser = _Parser(prog="gnse", description="Mixed FEM for generalized Navier-Stokes "
                     "with (p, delta)-structure: solves, convergence studies and probes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one benchmark configuration up to a level")
    s.add_argument("--element", required=True, choices=["mini", "th"])
    s.add_argument("--p", required=True, type=_p_value)
    s.add_argument("--case", required=True, type=int, choices=[1, 2])
    s.add_argument("--level", required=True, type=int)
    s.add_argument("--quad-deg", type=int, default=8,
                   help="quadrature degree of the nonlinear terms (default 8)")
    s.add_argument("--out", help="CSV file for the per-level errors")
    s.add_argument("--vtk", help="legacy VTK file with the finest solution at the vertices")

    st = sub.add_parser("study", help="EOC study over a list of exponents")
    st.add_argument("--element", required=True, choices=["mini", "th"])
    st.add_argument("--case", required=True, type=int, choices=[1, 2])
    st.add_argument("--p-list", required=True, type=_p_list)
    st.add_argument("--max-level", required=True, type=int)
    st.add_argument("--deterministic", action="store_true",
                    help=f"serial run with fixed accumulation order (ignores {WORKERS_ENV})")
    st.add_argument("--out-dir", required=True)

    r = sub.add_parser("rates", help="analytic exponent and rate curves")
    r.add_argument("--p-min", required=True, type=_p_value)
    r.add_argument("--p-max", required=True, type=_p_value)
    r.add_argument("--n", required=True, type=int)
    r.add_argument("--out", required=True)

    i = sub.add_parser("infsup", help="discrete inf-sup constants per level")
    i.add_argument("--element", required=True, choices=["mini", "th"])
    i.add_argument("--max-level", required=True, type=int)
    i.add_argument("--out", required=True)
    return parser


def study_filename(element, case_id, p):
    return f"{element}_case{case_id}_p{p:.6g}.csv"


def _cmd_solve(args):
    if args.level < 0:
        raise ConfigurationError("--level must be nonnegative")
    case = ManufacturedCase(args.case, args.p)
    exps = exponents(args.p)
    table = EocTable(ElementPair.parse(args.element).value, args.case, args.p)
    last = None
    for mesh, space, state, report in solve_sequence(args.element, case, args.level,
                                                     degree=args.quad_deg):
        h = 2.0 ** (-mesh.level)
        errs = error_norms(state, case, exps)
        table.rows.append(LevelResult(
            mesh.level, h, space.n_velocity_dofs, space.n_pressure_dofs, errs.e_v,
            errs.e_q_s, errs.e_q_ell, errs.e_q_p, report.iterations,
            dual_modular_diagnostic(case, h, state), stability_quantity(state, case),
            state.mu))
        last = (mesh, space, state)
    eocs = table.eoc("e_v")
    for row, rate in zip(table.rows, eocs):
        rate_txt = "" if rate is None else f"  eoc_v={rate:.3f}"
        print(f"level {row.level}: e_v={row.e_v:.6e} e_q_s={row.e_q_s:.6e} "
              f"iters={row.newton_iters}{rate_txt}")
    if args.out:
        emit_csv(table, args.out)
    if args.vtk:
        mesh, space, state = last
        vel = state.velocity.reshape(2, space.n_scalar).T[:mesh.n_vertices]
        write_vtk(mesh, args.vtk, {"velocity": vel, "pressure": state.pressure})
    return EXIT_OK


def _cmd_study(args):
    if args.max_level < 1:
        raise ConfigurationError("--max-level must be at least 1")
    os.makedirs(args.out_dir, exist_ok=True)
    tables = run_study(args.element, args.case, args.p_list, args.max_level,
                       deterministic=args.deterministic)
    for table in tables:
        path = os.path.join(args.out_dir, study_filename(args.element, args.case, table.p))
        emit_csv(table, path)
        final = table.final_eoc("e_v")
        print(f"p={table.p:g}: EOC(e_v)={final:.3f} -> {path}")
    return EXIT_OK


def _write_rows(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format(float(x), ".17g") if isinstance(x, float) else x
                            for x in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def _cmd_rates(args):
    if args.n < 2 or not args.p_max > args.p_min:
        raise ConfigurationError("need --n >= 2 and --p-max > --p-min")
    rows = rates_curves(np.linspace(args.p_min, args.p_max, args.n))
    header = list(rows[0])
    _write_rows(args.out, header, [[r[k] for k in header] for r in rows])
    return EXIT_OK


def _cmd_infsup(args):
    if args.max_level < 1:
        raise ConfigurationError("--max-level must be at least 1")
    levels = list(range(1, args.max_level + 1))
    betas = infsup_probe(args.element, levels)
    _write_rows(args.out, ["level", "h", "beta"],
                [[lv, 2.0 ** -lv, b] for lv, b in zip(levels, betas)])
    for lv, b in zip(levels, betas):
        print(f"level {lv}: beta_h={b:.6f}")
    return EXIT_OK


COMMANDS = {"solve": _cmd_solve, "study": _cmd_study, "rates": _cmd_rates,
            "infsup": _cmd_infsup}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NonConvergenceError as exc:
        print(f"gnse: Newton failed (p={exc.p}, level={exc.level}): {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConfigurationError, DomainError, MeshError) as exc:
        print(f"gnse: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
