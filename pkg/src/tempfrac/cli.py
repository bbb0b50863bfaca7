"""Command line: ``tempfrac {solve,bench,spectrum,export,order}``.

Exit codes: 0 success, 1 solver failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .config import load_config
from .errors import ConfigError, ContractViolation, DomainError, RefusalError

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2


def _config(args) -> dict:
    return load_config(args.config) if args.config else {}


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def cmd_solve(args) -> int:
    case = bench.single_case(_config(args))
    out = _outdir(args)
    record, problem, u = bench.run_case(case, keep_solution=True)
    if not record.converged:
        print(f"solver failure at time step {record.failed_step}: "
              f"{record.metadata.get('failure', '')}", file=sys.stderr)
        return EXIT_SOLVER
    path = out / "solution.csv"
    bench.write_csv(path, ["x", "u_numeric", "u_exact", "abs_diff"], bench.solution_rows(problem, u))
    err = "n/a" if problem.exact is None else f"{record.max_error:.6e}"
    print(f"N={case.N} steps={len(record.per_step_iterations)} "
          f"avg_iterations={record.avg_iterations:.2f} max_error={err}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    sizes = bench.DEFAULT_SIZES + (bench.EXTENDED_SIZES if args.extended else ())
    if args.extended and "N" in cfg:
        cfg["N"] = list(cfg["N"]) + [n for n in bench.EXTENDED_SIZES if n not in cfg["N"]]
    cases = bench.cases_from_config(cfg, sizes=sizes)
    out = _outdir(args)
    rows = []
    for case in cases:
        r = bench.run_case(case)
        rows.append(bench.record_row(r))
        flag = "" if r.converged else f"  NOT CONVERGED (step {r.failed_step})"
        print(f"{case.coefficient:>4} N={case.N:<5} {case.preconditioner:<6} "
              f"IT={r.avg_iterations:8.2f}  time={r.total_cpu_seconds:8.2f}s{flag}")
    path = out / "bench.csv"
    bench.write_csv(path, bench.RECORD_COLUMNS, rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = _config(args)
    method = cfg.pop("eigensolver", "lapack")
    if method not in ("lapack", "qr"):
        raise ConfigError(f"eigensolver must be lapack or qr, got {method!r}")
    case = bench.single_case(cfg)
    out = _outdir(args)
    ev_A, ev_AP = bench.spectra(case, method=method)
    for name, ev in (("spectrum_A.csv", ev_A), ("spectrum_AP.csv", ev_AP)):
        bench.write_csv(out / name, ["re", "im"], bench.eig_rows(ev))
    print(f"max|eig(A)-1| = {abs(ev_A - 1).max():.6g}")
    print(f"max|eig(A P^-1)-1| = {abs(ev_AP - 1).max():.6g}")
    print(f"wrote {out / 'spectrum_A.csv'} and {out / 'spectrum_AP.csv'}")
    return EXIT_OK


def cmd_export(args) -> int:
    case = bench.single_case(_config(args))
    out = _outdir(args)
    for p in bench.export_matrices(case, out):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_order(args) -> int:
    cfg = _config(args)
    Ns = cfg.get("N", list(bench.DEFAULT_ORDER_SIZES))
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ConfigError("N values for an order study must be strictly increasing")
    if "M" in cfg:
        raise ConfigError("the order study ties the time step to the space step; drop 'M'")
    cases = bench.cases_from_config(cfg, sizes=Ns, coefficients=("d1",), preconditioners=("tai",))
    if len(cases) != len(Ns):
        raise ConfigError("an order study takes a single coefficient and preconditioner")
    out = _outdir(args)
    records = []
    for case in cases:
        r = bench.run_case(case)
        records.append(r)
        if not r.converged:
            break
    header, rows = bench.order_rows(records)
    path = out / "order.csv"
    bench.write_csv(path, header, rows)
    for row in rows:
        print("  ".join(row))
    print(f"wrote {path}")
    if not records[-1].converged:
        print(f"solver failure at N={records[-1].case.N}, time step {records[-1].failed_step}; "
              "output is partial", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "spectrum": cmd_spectrum,
            "export": cmd_export, "order": cmd_order}

HELP = {
    "solve": "march one case and write x, u_numeric, u_exact, |diff|",
    "bench": "run a case matrix and write one record per case",
    "spectrum": "write the spectra of A and A P^-1 (N <= 1024)",
    "export": "write A, D and the first column of G as Matrix Market files (N <= 4096)",
    "order": "observed convergence order over a list of N",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempfrac", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        if name == "bench":
            p.add_argument("--extended", action="store_true", help="also run N = 2048 and 4096")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError, ContractViolation, RefusalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
