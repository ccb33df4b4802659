"""Command line front end.

    python -m gradnet lint NETLIST
    python -m gradnet compile NETLIST [--dump] [--print] [--flat]
    python -m gradnet op NETLIST
    python -m gradnet tran NETLIST --tend T --dt DT [--beta 1|0.5] [--uic]
    python -m gradnet ac NETLIST --fstart F0 --fstop F1 --points-per-decade N
    python -m gradnet sense NETLIST --loss node:<name> --wrt G [G ...]
    python -m gradnet size --spec SPEC [NETLIST]
    python -m gradnet gen-tables --out DIR [--seed S] [--vth-sigma V]

Exit status is 0 on success, 1 on a domain error (its error name is printed on stderr) and 2
on a usage error.
"""

from contextlib import contextmanager
from typing import List
import argparse
import json
import logging
import sys

import numpy as np

from gradnet.analysis.acanalysis import ac_sweep, frequency_grid
from gradnet.analysis.dcanalysis import operating_point
from gradnet.analysis.newton import NewtonConfig
from gradnet.analysis.results import FLOAT_FORMAT, dc_json, gradient_json
from gradnet.analysis.sensitivity import NodeGainLoss, dc_sensitivity, solve_dcac
from gradnet.analysis.transient import TransientStepContext, solve_tran
from gradnet.errors import GradnetError
from gradnet.framework.compiledcircuit import CompiledCircuit
from gradnet.framework.netlist import dumps, parse_file
from gradnet.framework.validation import ERROR, validate
from gradnet.primitives.submodel import SimInfo
from gradnet.sizing import tablegen
from gradnet.sizing.auglag import AugLagOptions, OPTIMAL, optimize
from gradnet.sizing.nlpcallbacks import make_callbacks
from gradnet.sizing.sizingproblem import build_problem

logger = logging.getLogger("gradnet")


def _configure_logging(verbosity : int, log_file : str = None):
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    if log_file:
        logging.basicConfig(filename=log_file, format='%(asctime)s %(message)s', filemode='w', level=level, force=True)
    else:
        logging.basicConfig(stream=sys.stderr, format='%(asctime)s %(message)s', level=level, force=True)


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            yield f


def _siminfo(args) -> SimInfo:
    return SimInfo(args.corner, args.temp, args.table_dir)


def _circuit(args) -> CompiledCircuit:
    return CompiledCircuit.from_file(args.netlist, _siminfo(args))


def _overrides(circuit, assignments):
    values = {}
    for item in assignments or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError("--set expects name=value, got %s"%item)
        values[name] = float(value)
    return circuit.gv(values)


def cmd_lint(args):
    diags = validate(parse_file(args.netlist))
    for d in diags:
        print(d, file=sys.stderr)
    n_errors = sum(d.severity == ERROR for d in diags)
    print("%d errors, %d warnings"%(n_errors, len(diags) - n_errors))
    return 1 if n_errors else 0


def cmd_compile(args):
    if args.print:
        print(dumps(parse_file(args.netlist)), end="")
        return 0
    circuit = _circuit(args)
    for d in validate(circuit.doc):
        logger.warning(str(d))
    if args.dump:
        print(circuit.dump_indexes())
    elif args.flat:
        for element in circuit.flatten():
            print(element.describe())
    else:
        print("%s: %d rules, %d unknowns, %d globals"%(circuit.doc.top, len(circuit.rules), circuit.N, len(circuit.global_names)))
    return 0


def _newton(args) -> NewtonConfig:
    return NewtonConfig(abstol=args.abstol, max_iter=args.max_iter)


def cmd_op(args):
    circuit = _circuit(args)
    result = operating_point(circuit, _newton(args), _overrides(circuit, args.set))
    with _output(args.output) as f:
        f.write(dc_json(circuit.names, result.x))
    return 0


def cmd_tran(args):
    circuit = _circuit(args)
    ctx = TransientStepContext(args.dt, args.beta)
    x0 = circuit.initial_guess() if args.uic else None
    trajectory = solve_tran(circuit, args.tend, ctx, _newton(args), _overrides(circuit, args.set), x0)
    with _output(args.output) as f:
        trajectory.write_csv(f)
    return 0


def cmd_ac(args):
    circuit = _circuit(args)
    gv = _overrides(circuit, args.set)
    x_dc = operating_point(circuit, _newton(args), gv).x
    sweep = ac_sweep(circuit, x_dc, frequency_grid(args.fstart, args.fstop, args.points_per_decade), gv)
    with _output(args.output) as f:
        sweep.write_csv(f, args.nodes)
    return 0


def cmd_sense(args):
    circuit = _circuit(args)
    gv = _overrides(circuit, args.set)
    kind, _, target = args.loss.partition(":")
    wrt = args.wrt or circuit.global_names
    cols = [circuit.global_index(name) for name in wrt]

    if kind == "node":
        x = operating_point(circuit, _newton(args), gv).x
        loss_grad = np.zeros(circuit.N)
        loss_grad[circuit.index(target)] = 1
        grad = dc_sensitivity(circuit, x, loss_grad, wrt, gv)
        value = x[circuit.index(target)]
    elif kind == "gain":
        node, _, freq = target.partition("@")
        omega = 2*np.pi*float(freq or 0)
        result = solve_dcac(circuit, omega, NodeGainLoss(circuit.index(node)), gv, _newton(args))
        grad = result.grad[cols]
        value = result.loss
    else:
        raise argparse.ArgumentTypeError("--loss must be node:<name> or gain:<name>@<freq>")

    with _output(args.output) as f:
        f.write(gradient_json(wrt, grad, value))
    return 0


def cmd_size(args):
    problem = build_problem(args.netlist, args.spec, SimInfo(table_dir=args.table_dir))
    callbacks = make_callbacks(problem, threads=args.threads)
    opts = AugLagOptions(tol=args.tol, max_outer=args.max_outer)
    result = optimize(callbacks, opts)

    report = {
        "status" : result.status,
        "iterations" : result.iterations,
        "objective" : float(FLOAT_FORMAT%result.objective),
        "constraint_violation" : float(FLOAT_FORMAT%result.constraint_violation),
        "p_opt" : {name : float(FLOAT_FORMAT%value) for name, value in result.p_opt.items()},
    }
    with _output(args.output) as f:
        f.write(json.dumps(report, indent=2) + "\n")
    if args.history:
        ax = result.plot_history()
        ax.figure.savefig(args.history)
    if result.status != OPTIMAL:
        print("SizingError: optimization ended with status %s"%result.status, file=sys.stderr)
        return 1
    return 0


def cmd_gen_tables(args):
    corners = tablegen.CORNERS if args.all_corners else [(args.corner, args.temp)]
    for path in tablegen.write_tables(args.out, corners, args.seed, args.vth_sigma):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--corner", default="tt", help="process corner of the device tables")
    common.add_argument("--temp", type=float, default=27.0, help="temperature in C")
    common.add_argument("--table-dir", default=None, help="device table directory (default $GRADNET_TABLE_DIR, then the netlist's directory)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--log-file", default=None)
    common.add_argument("-o", "--output", default=None, help="output file, stdout by default")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--abstol", type=float, default=1e-9)
    solver.add_argument("--max-iter", type=int, default=50)
    solver.add_argument("--set", action="append", metavar="NAME=VALUE", help="override a global variable")

    parser = argparse.ArgumentParser(prog="gradnet", description="Differentiable hierarchical circuit equations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lint", parents=[common], help="validate a netlist")
    p.add_argument("netlist")
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("compile", parents=[common], help="compile a netlist and print its index frames")
    p.add_argument("netlist")
    p.add_argument("--dump", action="store_true", help="print node and param frames per instance")
    p.add_argument("--print", action="store_true", help="print the netlist in canonical form")
    p.add_argument("--flat", action="store_true", help="print the flattened element list")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("op", parents=[common, solver], help="DC operating point as JSON")
    p.add_argument("netlist")
    p.set_defaults(func=cmd_op)

    p = sub.add_parser("tran", parents=[common, solver], help="fixed step transient as CSV")
    p.add_argument("netlist")
    p.add_argument("--tend", type=float, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0, choices=[1.0, 0.5], help="1 backward Euler, 0.5 trapezoidal")
    p.add_argument("--uic", action="store_true", help="start from the NodeSet values instead of the DC solution")
    p.set_defaults(func=cmd_tran)

    p = sub.add_parser("ac", parents=[common, solver], help="small signal sweep as CSV")
    p.add_argument("netlist")
    p.add_argument("--fstart", type=float, required=True)
    p.add_argument("--fstop", type=float, required=True)
    p.add_argument("--points-per-decade", type=int, default=10)
    p.add_argument("--nodes", nargs="+", default=None, help="nodes to write, all by default")
    p.set_defaults(func=cmd_ac)

    p = sub.add_parser("sense", parents=[common, solver], help="adjoint gradient of a loss as JSON")
    p.add_argument("netlist")
    p.add_argument("--loss", required=True, help="node:<name> (DC value) or gain:<name>@<freq> (AC gain in dB)")
    p.add_argument("--wrt", nargs="+", default=None, help="global variables, all by default")
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("size", parents=[common], help="device sizing from a spec file")
    p.add_argument("netlist", nargs="?", default=None, help="overrides the spec file's Netlist")
    p.add_argument("--spec", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-outer", type=int, default=50)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--history", default=None, help="save a plot of the optimization history")
    p.set_defaults(func=cmd_size)

    p = sub.add_parser("gen-tables", parents=[common], help="write synthetic MOSFET tables")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vth-sigma", type=float, default=0.0)
    p.add_argument("--single-corner", dest="all_corners", action="store_false", help="tabulate only --corner/--temp instead of the 3x3 corner grid")
    p.set_defaults(func=cmd_gen_tables)

    return parser


def run(argv : List[str] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.log_file)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as e:
        parser.print_usage(sys.stderr)
        print("gradnet: error: %s"%e, file=sys.stderr)
        return 2
    except GradnetError as e:
        print("%s: %s"%(e.error_name, e), file=sys.stderr)
        return 1
    except OSError as e:
        print("IOError: %s"%e, file=sys.stderr)
        return 1


def main():
    sys.exit(run())
