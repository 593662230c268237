"""Command-line frontend.

Subcommands: ``purity``, ``dephase``, ``limits``, ``reconstruct`` and
``simulate``.  Exit codes: 0 success, 1 runtime or physics failure, 2 bad
input (unreadable file, schema violation, invalid argument).
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import io as fio
from .densmat import DensityMatrixExpansion, dephase, dephase_all
from .fock import SlaterDeterminant
from .purity import (PurityReport, limit_ledger, order_matrix, overlapping_transitions,
                     p1_closed_form, p2_closed_form, purity_trace)
from .rdm import build_rdm
from .reconstruct import (ENSEMBLE_ENVELOPE_TOL, FIT_TOL, CoherenceModel, discard,
                          photoexcitation_models)

DEFAULT_MODEL_DETS = ("11001100", "10101100", "11001010")
ENSEMBLE_FIT_TOL = 0.02


class UsageError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _number_list(text: str) -> list:
    out = []
    for x in text.split(","):
        x = x.strip()
        if not x:
            continue
        try:
            out.append(Fraction(x))
        except (ValueError, ZeroDivisionError):
            raise argparse.ArgumentTypeError(f"cannot parse {x!r} as a number") from None
    return out


def _emit(doc, output):
    text = json.dumps(doc, indent=2) + "\n"
    if output is None or output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


# -- purity -----------------------------------------------------------------

def purity_reports(rho: DensityMatrixExpansion, orders, check: bool = False) -> dict:
    reports = []
    for r in orders:
        if not 1 <= r <= rho.N:
            raise UsageError(f"order r={r} outside 1..N={rho.N}")
        trace_value = purity_trace(build_rdm(rho, r))
        if r in (1, 2):
            rep = (p1_closed_form if r == 1 else p2_closed_form)(rho)
            entry = rep.to_dict()
            entry["closed_form_exact"] = not overlapping_transitions(rho, r)
            if entry["closed_form_exact"]:
                entry["value"] = rep.value
            else:
                # interfering coherences: only the trace route is exact
                entry["value"] = trace_value
        else:
            entry = PurityReport(r, trace_value, float("nan"), float("nan")).to_dict()
            entry["population_term"] = entry["coherence_term"] = None
            entry["closed_form_exact"] = None
        if check:
            entry["trace_value"] = trace_value
            entry["deviation"] = abs(entry["value"] - trace_value)
            if r in (1, 2):
                entry["closed_form_deviation"] = abs(entry["population_term"] + entry["coherence_term"] - trace_value)
        reports.append(entry)
    doc = {"N": rho.N, "K": rho.K, "M": rho.M, "reports": reports}
    if check:
        doc["max_deviation"] = max(e["deviation"] for e in reports)
    return doc


def cmd_purity(args) -> int:
    rho, _ = fio.read_density(args.input)
    doc = purity_reports(rho, args.r, args.check)
    _emit(doc, args.output)
    return 0


# -- dephase ----------------------------------------------------------------

def _pairs(text: str) -> set:
    out = set()
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            n, m = (int(x) for x in item.split("-"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"pairs look like '0-1,1-2', got {item!r}") from None
        out.add(frozenset((n, m)))
    return out


def cmd_dephase(args) -> int:
    rho, basis = fio.read_density(args.input)
    if args.all:
        out = dephase_all(rho)
    elif args.pairs:
        for p in args.pairs:
            if any(not 0 <= i < rho.M for i in p) or len(p) != 2:
                raise UsageError(f"pair {sorted(p)} out of range for M={rho.M}")
        out = dephase(rho, lambda n, m: frozenset((n, m)) in args.pairs)
    elif args.order is not None:
        s = order_matrix(rho)
        out = dephase(rho, lambda n, m: s[n, m] in args.order)
    else:
        raise UsageError("choose --all, --pairs or --order")
    doc = fio.density_to_json(out, basis)
    _emit(doc, args.output)
    return 0


# -- limits -----------------------------------------------------------------

def cmd_limits(args) -> int:
    pops = args.populations
    M = args.M if args.M is not None else (len(pops) if pops else None)
    if M is None:
        raise UsageError("give --M or --populations")
    if not pops:
        pops = [Fraction(1, M)] * M
    if len(pops) != M:
        raise UsageError(f"{len(pops)} populations for M={M}")
    if sum(pops) != 1:
        raise UsageError(f"populations sum to {float(sum(pops))}, expected 1")
    if args.orders is not None:
        tri = args.orders
        if len(tri) != M * (M - 1) // 2:
            raise UsageError(f"--orders needs {M * (M - 1) // 2} upper-triangle entries")
        orders = [[0] * M for _ in range(M)]
        it = iter(tri)
        for n in range(M):
            for m in range(n + 1, M):
                orders[n][m] = orders[m][n] = next(it)
    else:
        orders = [[0 if n == m else args.default_order for m in range(M)] for n in range(M)]
    out = {"N": args.N, "M": M, "populations": [str(p) for p in pops], "limits": []}
    for r in args.r:
        led = limit_ledger(pops, orders, args.N, r)
        d = led.to_dict()
        d["exact"] = {k: str(v) for k, v in led.__dict__.items() if isinstance(v, Fraction)}
        out["limits"].append(d)
    _emit(out, args.output)
    return 0


# -- reconstruct ------------------------------------------------------------

def load_models(path) -> list[CoherenceModel]:
    doc = fio.load_json(path)
    items = doc.get("models") if isinstance(doc, dict) else doc
    if not isinstance(items, list):
        raise fio.SchemaError("models", "expected a list of model objects")
    out = []
    for k, item in enumerate(items):
        try:
            out.append(CoherenceModel.from_dict(item))
        except (KeyError, TypeError) as exc:
            raise fio.SchemaError(f"models[{k}]", f"missing or malformed field ({exc})") from None
    return out


def cmd_reconstruct(args) -> int:
    obs = fio.read_timeseries(args.series)
    if args.models_file:
        models = load_models(args.models_file)
    else:
        dets = [SlaterDeterminant.from_string(s) for s in args.dets]
        models = [m for m in photoexcitation_models(dets) if m.name in args.models]
        unknown = set(args.models) - {m.name for m in models}
        if unknown:
            raise UsageError(f"unknown model names {sorted(unknown)}; built-in models are M1-M5")
    res = discard(models, obs, args.tol, fit_tol=args.fit_tol, stride=args.stride,
                  initial_coherence=args.initial_coherence)
    doc = res.to_dict(with_envelopes=args.envelopes)
    doc["tolerances"] = {"envelope": args.tol, "fit": args.fit_tol, "stride": args.stride}
    _emit(doc, args.output)
    return 0


# -- simulate ---------------------------------------------------------------

def _run_config(args):
    from .vibronic.experiments import RunConfig

    values = {}
    if args.from_manifest:
        values.update(fio.load_json(args.from_manifest)["config"])
    if args.config:
        values.update(fio.read_config(args.config, RunConfig))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig(**values)


def cmd_simulate(args) -> int:
    from .vibronic.experiments import run_preset

    config = _run_config(args)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        run = run_preset(config, threads=args.threads)
    for w in caught:
        print(f"simulate: warning: {w.message}", file=sys.stderr)
    res = run.result
    series = out / "timeseries.csv"
    fio.write_timeseries(series, res.times, res.orbital_populations, res.P1, res.P2,
                         res.P1_stderr, res.P2_stderr, res.orbital_labels)
    outputs = {"timeseries": series.name}
    if args.save_rdm:
        rdm_path = out / "rdm.npz"
        np.savez_compressed(rdm_path, times=res.times, rdm1=res.rdm1, rdm2=res.rdm2, rho=res.rho,
                            determinants=np.array([d.to_string() for d in res.determinants]))
        outputs["rdm"] = rdm_path.name
    extra = dict(run.extra)
    extra["energy_drift"] = res.energy_drift
    extra["max_orthonormality_error"] = res.max_orthonormality_error
    fio.dump_json(out / "manifest.json", fio.manifest("simulate", config.to_dict(), outputs, {"run": extra}))
    print(f"simulate: wrote {series}", file=sys.stderr)
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reduced-purities", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("purity", help="reduced purities of a density-matrix file")
    sp.add_argument("input")
    sp.add_argument("--r", type=_int_list, default=[1, 2], help="orders, e.g. 1,2 (default 1,2)")
    sp.add_argument("--check", action="store_true", help="compare against the reduced-density-matrix trace")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_purity)

    sp = sub.add_parser("dephase", help="zero selected coherences of a density-matrix file")
    sp.add_argument("input")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--all", action="store_true", help="zero every coherence")
    g.add_argument("--pairs", type=_pairs, help="determinant index pairs, e.g. 0-1,1-2")
    g.add_argument("--order", type=_int_list, help="zero coherences of these orders, e.g. 1,2")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_dephase)

    sp = sub.add_parser("limits", help="limiting values of P1 and P2")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--M", type=int)
    sp.add_argument("--populations", type=_number_list, help="e.g. 0.75,0.25 or 3/4,1/4 (default uniform)")
    sp.add_argument("--orders", type=_int_list, help="upper-triangle pair orders s_nm, row by row")
    sp.add_argument("--default-order", type=int, default=1, help="order used when --orders is absent")
    sp.add_argument("--r", type=_int_list, default=[1, 2])
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_limits)

    sp = sub.add_parser("reconstruct", help="envelope test of coherence models on a time series")
    sp.add_argument("series", help="time-series CSV written by 'simulate'")
    sp.add_argument("--models", type=lambda s: [x.strip() for x in s.split(",") if x.strip()],
                    default=["M1", "M2", "M3", "M4", "M5"], help="built-in models (default M1-M5)")
    sp.add_argument("--dets", type=lambda s: s.split(","), default=list(DEFAULT_MODEL_DETS),
                    help="three determinants for the built-in models")
    sp.add_argument("--models-file", help="JSON list of model definitions instead of the built-ins")
    sp.add_argument("--tol", type=float, default=ENSEMBLE_ENVELOPE_TOL,
                    help=f"envelope tolerance (default {ENSEMBLE_ENVELOPE_TOL}; use 1e-6 for exact data)")
    sp.add_argument("--fit-tol", type=float, default=ENSEMBLE_FIT_TOL,
                    help=f"population-fit residual tolerance (default {ENSEMBLE_FIT_TOL}; exact data {FIT_TOL})")
    sp.add_argument("--stride", type=int, default=1, help="test every k-th time step")
    sp.add_argument("--initial-coherence", choices=["coherent", "incoherent"],
                    help="require the first time step to sit on this envelope edge")
    sp.add_argument("--envelopes", action="store_true", help="include envelope series in the verdict")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("simulate", help="Ehrenfest ensemble run on the SSH chain")
    from .vibronic.experiments import PRESETS, RunConfig
    defaults = RunConfig()
    sp.add_argument("--preset", choices=PRESETS)
    sp.add_argument("--config", help="key = value file with any of the options below")
    sp.add_argument("--from-manifest", help="rerun with the configuration echoed in a manifest")
    for f in fields(RunConfig):
        if f.name == "preset":
            continue
        flag = "--" + f.name.replace("_", "-")
        default = getattr(defaults, f.name)
        if isinstance(default, bool):
            sp.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes", "on"),
                            help=f"(default {default})")
        else:
            kind = int if isinstance(default, int) else float
            sp.add_argument(flag, type=kind, help=f"(default {default})")
    sp.add_argument("--threads", type=int, default=1, help="concurrent trajectory chunks")
    sp.add_argument("--save-rdm", action="store_true", help="also write rdm.npz with the RDM time series")
    sp.add_argument("-d", "--output-dir", default=".")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # physics or numerical failure
        print(f"{args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
