"""Command-line entry point: ``spinsqueeze {simulate,sweep,ramsey,oracle-check,analyze}``.

Every run writes the effective configuration to ``run_config.txt`` and a
plain-text ``report.txt`` in the output directory. ``--csv`` adds the trial
records and summary tables. Outputs contain no timestamps, so repeating an
invocation reproduces them byte for byte.
"""

import argparse
import csv
import math
from pathlib import Path
import sys

from . import oracle
from ._validation import InvalidArgumentError
from .config import ConfigError, ExperimentConfig, config_to_text, parse_config
from .experiments import (
    TrialRecords,
    run_aoc_ramsey,
    run_squeezing_sequence,
    run_trap_loss_sweep,
    summarize,
    trap_loss_atom_counts,
    with_readout_bin,
)
from .io import OutputError, _cell, emit_csv, read_records

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

ORACLE_FIELDS = (
    "tx",
    "zeta",
    "pred_var_cond",
    "pred_db",
    "pred_var_cond_decohered",
    "sim_var_cond",
    "sim_var_cond_err",
    "z_score",
    "delta_e_h",
    "delta_b_ft",
)


def _fmt(value, spec=".6g"):
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return format(value, spec)


def _summary_lines(summary):
    lines = []
    if summary.readout_subtracted:
        lines.append(
            f"read-out variance: {_fmt(summary.var_readout)} +- {_fmt(summary.var_readout_err)} (subtracted)"
        )
    else:
        lines.append("read-out variance: unknown (not subtracted)")
    lines.append(
        f"{'tx':>12} {'n':>7} {'var_phi1':>12} {'var_phi2':>12} {'chi':>8} {'var_cond':>12} {'dB':>7} {'xi2_m':>7}"
    )
    for b in summary.bins:
        lines.append(
            f"{_fmt(b.tx):>12} {b.n:>7} {_fmt(b.var_phi1):>12} {_fmt(b.var_phi2):>12} "
            f"{_fmt(b.chi, '.4f'):>8} {_fmt(b.var_cond):>12} {_fmt(b.noise_reduction_db, '.2f'):>7} "
            f"{_fmt(b.xi2_m, '.3f'):>7}"
        )
    for name, fit in (("phi1", summary.fit_phi1), ("phi2", summary.fit_phi2)):
        if fit is not None:
            lines.append(
                f"fit {name} (Tx in 1e5): a1 = {fit.a1:.4f} +- {fit.a1_err:.4f}, a2 = {fit.a2:.4f} +- {fit.a2_err:.4f}"
            )
    r = summary.report
    if r is not None:
        lines.append(
            f"top bin: noise reduction {r.noise_reduction_db:.2f} dB, xi2_m = {r.xi2_m:.3f}, "
            f"entangled = {'yes' if r.entanglement_witness else 'no'}"
        )
    return lines


def _ramsey_lines(summary):
    lines = ["sensitivities in Hz/sqrt(Hz), read-out noise not subtracted"]
    lines.append(f"{'tx':>12} {'sens_css':>10} {'sens_sq':>10} {'improvement':>12}")
    for b in summary.bins:
        lines.append(
            f"{_fmt(b.tx):>12} {_fmt(b.sens_css, '.5f'):>10} {_fmt(b.sens_sq, '.5f'):>10} "
            f"{_fmt(100 * b.improvement, '.2f'):>11}%"
        )
    return lines


def oracle_check(config, seed=None):
    """Closed-form predictions with simulated counterparts.

    Rows cover the trap-loss grid plus the Ramsey reference alignment. With
    ``config.trials == 0`` only the theory columns are filled. The z-score
    compares the simulated conditional variance of the second pair with the
    prediction that includes the coherence lost before it. Sensitivities are
    those of projection-noise-limited input states.

    Returns
    -------
    list of dict keyed by :data:`ORACLE_FIELDS`
    """
    dec = config.decoherence
    contrast = (1 - dec.eta_sc) * (1 - dec.dephasing_fraction(config.probe.spacing))
    n_l = config.probe.photons_per_pulse
    atoms = list(trap_loss_atom_counts(config))
    ref_atoms = 2 * config.ramsey.reference_tx / config.eff_factor
    if not any(math.isclose(a, ref_atoms, rel_tol=1e-9) for a in atoms):
        atoms.append(ref_atoms)
    atoms.sort(reverse=True)
    sims = {}
    if config.trials > 0:
        records = run_squeezing_sequence(config, seed, atom_counts=atoms)
        records = with_readout_bin(config, records, len(atoms), seed)
        sims = {b.tx: b for b in summarize(records, config).bins if b.tx > 0}
    rows = []
    for a in atoms:
        tx = a * config.eff_factor / 2
        pred = oracle.predict(
            config.couplings,
            n_l,
            tx,
            contrast=contrast,
            time=config.ramsey.time,
            volume_cm3=config.volume_cm3,
            g_factor=config.g_factor,
        )
        row = dict(
            tx=tx,
            zeta=pred.zeta,
            pred_var_cond=pred.var_conditional,
            pred_db=-10 * math.log10(1 + pred.zeta),
            pred_var_cond_decohered=pred.var_second_conditional,
            sim_var_cond=math.nan,
            sim_var_cond_err=math.nan,
            z_score=math.nan,
            delta_e_h=pred.sensitivity_e_over_h,
            delta_b_ft=pred.field_sensitivity * oracle.TESLA_TO_FT,
        )
        b = next((v for k, v in sims.items() if math.isclose(k, tx, rel_tol=1e-9)), None)
        if b is not None:
            row["sim_var_cond"] = b.var_cond
            row["sim_var_cond_err"] = b.var_cond_err
            row["z_score"] = (b.var_cond - pred.var_second_conditional) / b.var_cond_err
        rows.append(row)
    return rows


def _oracle_lines(rows):
    lines = [
        f"{'tx':>12} {'zeta':>8} {'pred_cond':>12} {'pred_dB':>8} {'pred_c':>12} {'sim_cond':>12} "
        f"{'z':>7} {'dE/h':>8} {'dB_fT':>8}"
    ]
    for r in rows:
        lines.append(
            f"{_fmt(r['tx']):>12} {_fmt(r['zeta'], '.4f'):>8} {_fmt(r['pred_var_cond']):>12} "
            f"{_fmt(r['pred_db'], '.3f'):>8} {_fmt(r['pred_var_cond_decohered']):>12} "
            f"{_fmt(r['sim_var_cond']):>12} {_fmt(r['z_score'], '.2f'):>7} "
            f"{_fmt(r['delta_e_h'], '.4f'):>8} {_fmt(r['delta_b_ft'], '.2f'):>8}"
        )
    return lines


def _write_oracle_csv(rows, path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ORACLE_FIELDS)
            for r in rows:
                writer.writerow([_cell(r[f]) for f in ORACLE_FIELDS])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _cmd_simulate(config, args, out):
    records = with_readout_bin(config, run_squeezing_sequence(config, args.seed), 1, args.seed)
    return records, summarize(records, config), _summary_lines


def _cmd_sweep(config, args, out):
    records = run_trap_loss_sweep(config, args.seed)
    return records, summarize(records, config), _summary_lines


def _cmd_ramsey(config, args, out):
    grid = trap_loss_atom_counts(config)
    css = run_aoc_ramsey(config, False, args.seed, atom_counts=grid)
    sq = run_aoc_ramsey(config, True, args.seed, atom_counts=grid)
    sq.trial_id += len(css)
    records = TrialRecords.concat([css, sq])
    return records, summarize(records, config), _ramsey_lines


def _cmd_analyze(config, args, out):
    records = read_records(args.records)
    return None, summarize(records, config), _summary_lines


def build_parser():
    parser = argparse.ArgumentParser(prog="spinsqueeze", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="dotted-key configuration file")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, help="override mc.seed")
    common.add_argument("--trials", type=int, help="override mc.trials")
    common.add_argument("--csv", action="store_true", help="also write CSV tables")
    common.add_argument("--quiet", action="store_true", help="do not print the report")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="squeezing sequence at atoms.count plus read-out bin")
    sub.add_parser("sweep", parents=[common], help="trap-loss sweep of the squeezing sequence")
    sub.add_parser("ramsey", parents=[common], help="CSS and squeezed Ramsey arms over the sweep grid")
    sub.add_parser("oracle-check", parents=[common], help="closed-form predictions vs simulation")
    analyze = sub.add_parser("analyze", parents=[common], help="summarize a trials CSV")
    analyze.add_argument("records", metavar="RECORDS", help="trials CSV written with --csv")
    return parser


def load_config(path):
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def run(args):
    try:
        config = load_config(args.config).with_overrides(seed=args.seed, trials=args.trials)
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "run_config.txt").write_text(config_to_text(config), encoding="utf-8")
        if args.command == "oracle-check":
            rows = oracle_check(config)
            lines = _oracle_lines(rows)
            if args.csv:
                _write_oracle_csv(rows, out / "oracle_check.csv")
        else:
            handler = {
                "simulate": _cmd_simulate,
                "sweep": _cmd_sweep,
                "ramsey": _cmd_ramsey,
                "analyze": _cmd_analyze,
            }[args.command]
            if args.command != "analyze" and config.trials < 1:
                raise InvalidArgumentError("simulation needs mc.trials >= 1")
            records, summary, render = handler(config, args, out)
            lines = render(summary)
            if args.csv:
                if records is not None:
                    emit_csv(records, out / "trials.csv")
                emit_csv(summary, out / "summary.csv")
        text = "\n".join(lines) + "\n"
        (out / "report.txt").write_text(text, encoding="utf-8")
    except (OSError, ValueError) as exc:
        # InvalidArgumentError and DegenerateInputError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
