"""Command-line interface.

Subcommands: ``sample``, ``decompose``, ``efp``, ``sweep``, ``stats`` and
``verify``. Options may also come from an INI file given with ``--config``;
keys in ``[common]`` apply to every subcommand and keys in a section named after
the subcommand override them. Command-line flags win over the file.

Example config::

    [common]
    sides = 64
    N = 16
    gamma = 0.002

    [stats]
    trials = 200
    observables = dos,spacing
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

from . import numerics
from .eigenflow import completeness_check, efp_run
from .experiments import ExperimentConfig, run_ensemble, spacing_vs_N, trial_seed, write_report
from .influence import movement_decomposition, prepare_movement_trial, sweep_vbar
from .lattice import Hamiltonian, build_geometry, build_hamiltonian, sample_disorder
from .multiscale import fixed_energy_cascade, make_schedule


def _ints(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _words(text: str) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]


# option name -> (converter, default)
LATTICE_OPTIONS = {
    "d": (int, 1),
    "sides": (_ints, [32]),
    "N": (int, 16),
    "gamma": (float, 1e-3),
    "seed": (int, 0),
    "precision": (int, None),
}
SCHEDULE_OPTIONS = {
    "L0": (int, 1),
    "alpha": (float, 1.5),
    "schedule": (str, "geometric"),
    "ratio": (float, 0.125),
    "eps1": (float, None),
}


def _add_options(p: argparse.ArgumentParser, options: dict, help_text: dict | None = None) -> None:
    help_text = help_text or {}
    for name, (conv, default) in options.items():
        kind = {_ints: str, _floats: str, _words: str}.get(conv, conv)
        flags = [f"--{name}"] + ([f"--{name.replace('_', '-')}"] if "_" in name else [])
        p.add_argument(*flags, dest=name, type=kind, default=None,
                       help=help_text.get(name, f"default: {default}"))


def _common(p: argparse.ArgumentParser, schedule: bool = True) -> None:
    p.add_argument("--config", type=Path, help="INI file with option defaults")
    p.add_argument("--out", type=Path, help="output file or directory (default: stdout)")
    p.add_argument("--input", type=Path, help="Hamiltonian JSON written by 'sample'")
    _add_options(p, LATTICE_OPTIONS, {"sides": "comma-separated extents (one value is repeated d times)",
                                      "precision": "mpfr bits (default: float64)"})
    if schedule:
        _add_options(p, SCHEDULE_OPTIONS, {"schedule": "'geometric', or 'power' (eps_k = gamma^(1.6 L_k))"})


STATS_OPTIONS = {
    "trials": (int, 100),
    "energies": (_floats, [0.5]),
    "deltas": (_floats, [1e-3, 1e-2, 1e-1]),
    "spacing_deltas": (_floats, [1e-8, 1e-6, 1e-4]),
    "observables": (_words, ["dos", "correlator", "spacing"]),
    "correlator_min_distance": (int, 8),
    "spacing_N": (_ints, []),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anderson-msa",
                                     description="Multiscale analysis of the discrete Anderson model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw a disorder realization and write H")
    _common(p, schedule=False)

    p = sub.add_parser("decompose", help="resonant sets, blocks and collars at one energy")
    _common(p)
    p.add_argument("--site", type=int, help="reference site (default: centre)")
    p.add_argument("--energy", type=float, help="probe energy (default: H at the site)")
    p.add_argument("--kmax", type=int, help="stop after this scale")

    p = sub.add_parser("efp", help="energy-following procedure from one or all start sites")
    _common(p)
    p.add_argument("--site", type=str, help="start site or 'all' (default: centre)")
    p.add_argument("--fanout", type=int, default=None, help="branch cap per start site (default: 64)")
    p.add_argument("--vectors", action="store_true", help="include eigenvectors in the output")

    p = sub.add_parser("sweep", help="influence site and eigenvalue-movement trials")
    _common(p)
    p.add_argument("--site", type=int, help="start site (default: centre)")
    p.add_argument("--trials", type=int, default=None, help="number of realizations (default: 10)")
    p.add_argument("--k", type=int, default=None, help="scale of the experiment (default: 2)")

    p = sub.add_parser("stats", help="Monte Carlo ensemble of observables")
    _common(p)
    _add_options(p, STATS_OPTIONS, {"spacing_N": "comma-separated N values for a spacing comparison"})
    p.add_argument("--no-figures", action="store_true", help="skip PNG output")

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--config", type=Path, help="INI file (unused keys ignored)")
    p.add_argument("--out", type=Path, help="write the suite report as JSON")
    p.add_argument("--filter", type=str, help="comma-separated check names or prefixes")
    p.add_argument("--list", action="store_true", help="list the available checks")
    return parser


def _apply_config(args: argparse.Namespace, options: dict) -> None:
    """Fill unset options from the config file, then from the defaults."""
    cfg = configparser.ConfigParser()
    cfg.optionxform = str
    if getattr(args, "config", None):
        if not args.config.exists():
            raise SystemExit(f"config file not found: {args.config}")
        cfg.read(args.config)
    sections = [s for s in ("common", args.command) if cfg.has_section(s)]
    for name, (conv, default) in options.items():
        value = getattr(args, name, None)
        if value is None:
            for sec in reversed(sections):
                if cfg.has_option(sec, name):
                    value = cfg.get(sec, name)
                    break
        if value is None:
            setattr(args, name, default)
        else:
            setattr(args, name, conv(value) if isinstance(value, str) else value)


def _hamiltonian(args) -> Hamiltonian:
    if args.input:
        data = json.loads(args.input.read_text())
        if args.precision is not None:
            data["precision"] = args.precision
        return Hamiltonian.from_dict(data)
    sides = list(args.sides)
    if len(sides) == 1 and args.d > 1:
        sides = sides * args.d
    geom = build_geometry(args.d, sides)
    return build_hamiltonian(geom, sample_disorder(geom, args.N, args.seed), args.gamma,
                             precision=args.precision)


def _schedule(args, H: Hamiltonian):
    return make_schedule(args.L0, H.gamma, H.disorder.N, kind=args.schedule, alpha=args.alpha,
                         ratio=args.ratio, eps1=args.eps1, diam=H.geometry.diam,
                         precision=H.precision)


def _emit(data: dict, out: Path | None, name: str) -> None:
    text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    if out.suffix == ".json":
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def _centre(H: Hamiltonian) -> int:
    return H.geometry.index([s // 2 for s in H.geometry.sides])


# --------------------------------------------------------------------------
# subcommands

def cmd_sample(args) -> int:
    H = _hamiltonian(args)
    _emit(H.to_dict(), args.out, "hamiltonian.json")
    return 0


def cmd_decompose(args) -> int:
    H = _hamiltonian(args)
    sched = _schedule(args, H)
    site = _centre(H) if args.site is None else args.site
    with numerics.working_precision(H.precision):
        E = H.diagonal_energy(site) if args.energy is None else args.energy
        state = fixed_energy_cascade(H, sched, E, kmax=args.kmax)
    data = {"hamiltonian": H.to_dict(), "site": site, "regime": sched.regime_report(H.geometry.d, H.geometry.diam),
            "state": state.to_dict()}
    _emit(data, args.out, "decompose.json")
    return 0


def cmd_efp(args) -> int:
    H = _hamiltonian(args)
    sched = _schedule(args, H)
    fanout = 64 if args.fanout is None else args.fanout
    if args.site == "all":
        sites = list(range(H.size))
    else:
        sites = [_centre(H) if args.site is None else int(args.site)]
    runs = [efp_run(H, sched, x, fanout) for x in sites]
    data = {
        "hamiltonian": H.to_dict(),
        "schedule": sched.to_dict(),
        "runs": [{
            "start_site": r.start_site,
            "eigenpairs": [p.to_dict(H.is_mp, args.vectors) for p in r.eigenpairs],
            "branches": [b.to_dict(H.is_mp) for b in r.branches],
            "log": r.log,
        } for r in runs],
    }
    if args.site == "all":
        data["completeness"] = completeness_check(H, sched, runs=runs).to_dict()
    _emit(data, args.out, "efp.json")
    return 0


def cmd_sweep(args) -> int:
    trials = 10 if args.trials is None else args.trials
    k = 2 if args.k is None else args.k
    rows = []
    reasons: dict[str, int] = {}
    for i in range(trials):
        seed = trial_seed(args.seed, i)
        ns = argparse.Namespace(**{**vars(args), "seed": seed, "input": None})
        H = _hamiltonian(ns)
        sched = _schedule(args, H)
        x = _centre(H) if args.site is None else args.site
        setup, reason = prepare_movement_trial(H, sched, x, k)
        row = {"trial": i, "seed": seed, "valid": setup is not None,
               "reason": reason or "valid"}
        reasons[row["reason"]] = reasons.get(row["reason"], 0) + 1
        if setup is not None:
            dec = movement_decomposition(setup)
            sw = sweep_vbar(setup)
            row.update({"setup": setup.to_dict(), "decomposition": dec.to_dict(), "sweep": sw.to_dict()})
        rows.append(row)
    valid = [r for r in rows if r["valid"]]
    summary = {
        "trials": trials, "valid": len(valid), "outcomes": dict(sorted(reasons.items())),
        "at_most_one_unchanged": sum(1 for r in valid if r["sweep"]["unchanged"] <= 1),
        "monotone": sum(1 for r in valid if r["sweep"]["monotone"]),
        "max_reconstruction_error": max((r["decomposition"]["reconstruction_error"] for r in valid),
                                        default=None),
    }
    if args.out is None:
        for r in rows:
            sys.stdout.write(json.dumps(r, sort_keys=True) + "\n")
        sys.stdout.write(json.dumps({"summary": summary}, sort_keys=True) + "\n")
        return 0
    args.out.mkdir(parents=True, exist_ok=True)
    with (args.out / "trials.jsonl").open("w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    (args.out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_stats(args) -> int:
    sides = list(args.sides)
    if len(sides) == 1 and args.d > 1:
        sides = sides * args.d
    cfg = ExperimentConfig(d=args.d, sides=tuple(sides), N=args.N, gamma=args.gamma, L0=args.L0,
                           alpha=args.alpha, schedule=args.schedule, ratio=args.ratio,
                           energies=tuple(args.energies), deltas=tuple(args.deltas),
                           spacing_deltas=tuple(args.spacing_deltas),
                           correlator_min_distance=args.correlator_min_distance,
                           trials=args.trials, base_seed=args.seed,
                           observables=tuple(args.observables))
    report = run_ensemble(cfg)
    out = args.out or Path("stats-report")
    write_report(report, out)
    if args.spacing_N:
        table = spacing_vs_N(cfg, args.spacing_N)
        (out / "spacing_vs_N.json").write_text(json.dumps(table, sort_keys=True, indent=2) + "\n")
    if not args.no_figures:
        from .plotting import plot_report
        plot_report(report.to_dict(), out)
    sys.stdout.write(f"wrote {out}\n" if args.out else f"wrote {out} (default location)\n")
    return 0


def cmd_verify(args) -> int:
    from . import verify

    if args.list:
        for name in verify.CHECKS:
            sys.stdout.write(name + "\n")
        return 0
    try:
        names = verify.select(args.filter)
    except KeyError as exc:
        sys.stderr.write(f"{exc}\n")
        return 2
    suite = verify.AcceptanceSuite()
    for name in names:
        check = verify.CHECKS[name]()
        suite.add(check)
        sys.stdout.write(check.line() + "\n")
    if args.out is not None:
        data = verify._clean(suite.to_dict())
        _emit(data, args.out, "verify.json")
    return 0 if suite.passed else 1


COMMANDS = {"sample": cmd_sample, "decompose": cmd_decompose, "efp": cmd_efp,
            "sweep": cmd_sweep, "stats": cmd_stats, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "stats" and args.seed is None:
        cfg_seed = None
        if args.config and args.config.exists():
            cp = configparser.ConfigParser()
            cp.optionxform = str
            cp.read(args.config)
            for sec in ("stats", "common"):
                if cp.has_option(sec, "seed"):
                    cfg_seed = cp.get(sec, "seed")
                    break
        if cfg_seed is None:
            parser.error("stats requires --seed (or seed in the config file)")
    if args.command != "verify":
        options = {**LATTICE_OPTIONS}
        if args.command != "sample":
            options.update(SCHEDULE_OPTIONS)
        if args.command == "stats":
            options.update(STATS_OPTIONS)
        _apply_config(args, options)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, ArithmeticError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
