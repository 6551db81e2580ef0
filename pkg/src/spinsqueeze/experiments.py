"""Measurement sequences and the Monte Carlo trial engine.

Trials are generated in fixed blocks of :data:`BLOCK_SIZE`. Each block and
each measurement step in it draws from its own stream, keyed by
``(seed, bin index, block index, step)``, so results do not depend on the
number of workers or on which other steps a sequence contains. The CSS and
squeezed arms of a Ramsey run therefore share read-out noise on the AOC
pulse (common random numbers), which makes their comparison sharp.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
import math
from typing import NamedTuple

import numpy as np

from ._validation import DegenerateInputError, InvalidArgumentError
from .config import ExperimentConfig
from .dynamics import (
    NoiseModel,
    aoc_measurement,
    apply_decoherence,
    dispersive_alignment_signal,
    free_precession,
    qnd_pair_measurement,
    readout_noise_variance,
    tx_from_dispersive,
)
from .estimators import (
    NoiseScalingFit,
    SqueezingReport,
    chi_estimator,
    conditional_variance,
    db,
    quadratic_noise_fit,
    squeezing_report,
    variance_estimate,
    wineland_xi2,
)
from .model import DecoherenceParams, ProbePulse, make_css
from .oracle import predicted_sensitivity

BLOCK_SIZE = 1000
FIT_TX_UNIT = 1e5

STEP_QND1, STEP_QND2, STEP_AOC, STEP_DISPERSIVE = range(4)

RECORD_FIELDS = ("trial_id", "tx_in", "phi1", "phi2", "phi_aoc", "tx_out", "seed_stream_id")


class TrialRecord(NamedTuple):
    trial_id: int
    tx_in: float
    phi1: float
    phi2: float
    phi_aoc: float
    tx_out: float
    seed_stream_id: int


class TrialRecords:
    """Column store of :class:`TrialRecord` rows; absent outcomes are NaN."""

    def __init__(self, trial_id, tx_in, phi1, phi2, phi_aoc, tx_out, seed_stream_id):
        self.trial_id = np.asarray(trial_id, dtype=np.int64)
        self.tx_in = np.asarray(tx_in, dtype=float)
        self.phi1 = np.asarray(phi1, dtype=float)
        self.phi2 = np.asarray(phi2, dtype=float)
        self.phi_aoc = np.asarray(phi_aoc, dtype=float)
        self.tx_out = np.asarray(tx_out, dtype=float)
        self.seed_stream_id = np.asarray(seed_stream_id, dtype=np.int64)
        n = len(self.trial_id)
        if any(len(getattr(self, f)) != n for f in RECORD_FIELDS):
            raise InvalidArgumentError("record columns differ in length")
        if np.any(self.tx_out > self.tx_in * (1 + 1e-12)):
            raise InvalidArgumentError("tx_out must not exceed tx_in")

    def __len__(self):
        return len(self.trial_id)

    def __iter__(self):
        cols = [getattr(self, f).tolist() for f in RECORD_FIELDS]
        return (TrialRecord(*row) for row in zip(*cols))

    def __getitem__(self, index):
        return TrialRecord(*(getattr(self, f)[index].item() for f in RECORD_FIELDS))

    def __eq__(self, other):
        if not isinstance(other, TrialRecords):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True) for f in RECORD_FIELDS
        )

    def columns(self):
        return {f: getattr(self, f) for f in RECORD_FIELDS}

    def select(self, mask):
        return TrialRecords(**{f: getattr(self, f)[mask] for f in RECORD_FIELDS})

    @classmethod
    def empty(cls):
        return cls(*([],) * len(RECORD_FIELDS))

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(**{f: np.concatenate([getattr(p, f) for p in parts]) for f in RECORD_FIELDS})

    @classmethod
    def from_rows(cls, rows):
        rows = list(rows)
        if not rows:
            return cls.empty()
        return cls(*zip(*rows))


def _streams(seed, bin_index, block_index):
    return [
        np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(bin_index, block_index, step)))
        for step in range(4)
    ]


def _pulses(config):
    n = config.probe.photons_per_pulse
    d = config.probe.duration
    return ProbePulse.from_mode("linear_v", n, d), ProbePulse.from_mode("linear_h", n, d)


def ramsey_overrides(config):
    """Scattering loss and pair noise model of the squeezed Ramsey arm.

    Without overrides these are the configured values. A `ramsey.contrast`
    override sets the pair's scattering loss so that, together with the
    precession dephasing, the alignment falls to that contrast. A
    `ramsey.noise_reduction_db` override rescales the pair's signal-to-noise
    so that the conditional variance of the state reaching the AOC pulse is
    that far below ``Tx/2`` at `ramsey.reference_tx`.

    Returns
    -------
    eta_sc : float
    pair_noise : NoiseModel
    """
    settings = config.ramsey
    dec = config.decoherence
    keep_dep = 1 - dec.dephasing_fraction(settings.time)
    eta_sc = dec.eta_sc
    if settings.contrast is not None:
        if settings.contrast > keep_dep:
            raise InvalidArgumentError("ramsey contrast exceeds what dephasing alone allows")
        eta_sc = 1 - settings.contrast / keep_dep
    noise = config.noise
    if settings.noise_reduction_db is not None:
        c = (1 - eta_sc) * keep_dep
        target = 10 ** (settings.noise_reduction_db / 10)
        # target = c^2 / (1 + zeta_eff) + c (1 - c)
        q = (target - c * (1 - c)) / c**2
        if not 0 < q < 1:
            raise InvalidArgumentError("noise reduction unreachable with this contrast")
        zeta_eff = 1 / q - 1
        theta_free_ro = readout_noise_variance(
            config.probe.photons_per_pulse, 2, config.couplings, 0.0, replace(noise, snr_efficiency=1.0)
        )
        zeta_cfg = (settings.reference_tx / 2) / theta_free_ro
        noise = replace(noise, snr_efficiency=zeta_eff / zeta_cfg)
    return eta_sc, noise


def _readout_block(config, atoms, n, streams):
    ro = readout_noise_variance(config.probe.photons_per_pulse, 2, config.couplings, 0.0, config.noise)
    sd = math.sqrt(ro)
    phi1 = sd * streams[STEP_QND1].standard_normal(n)
    phi2 = sd * streams[STEP_QND2].standard_normal(n)
    nan = np.full(n, np.nan)
    return 0.0, phi1, phi2, nan, np.zeros(n)


def _independent_block(config, atoms, n, streams):
    pv, ph = _pulses(config)
    css = make_css(atoms, config.eff_factor).replicate(n)
    scatter = DecoherenceParams(eta_sc=config.decoherence.eta_sc)
    out1, _ = qnd_pair_measurement(
        css, pv, ph, config.couplings, config.noise, streams[STEP_QND1], decoherence=scatter
    )
    out2, _ = qnd_pair_measurement(
        css, pv, ph, config.couplings, config.noise, streams[STEP_QND2], decoherence=scatter
    )
    return css.tx[0], out1.phi, out2.phi, np.full(n, np.nan), css.tx.copy()


def _squeezing_block(config, atoms, n, streams):
    pv, ph = _pulses(config)
    dec = config.decoherence
    css = make_css(atoms, config.eff_factor).replicate(n)
    scatter = DecoherenceParams(eta_sc=dec.eta_sc)
    out1, state = qnd_pair_measurement(
        css, pv, ph, config.couplings, config.noise, streams[STEP_QND1], decoherence=scatter
    )
    state = apply_decoherence(state, DecoherenceParams(eta_dep=dec.dephasing_fraction(config.probe.spacing)))
    out2, _ = qnd_pair_measurement(
        state, pv, ph, config.couplings, config.noise, streams[STEP_QND2], decoherence=scatter
    )
    return css.tx[0], out1.phi, out2.phi, np.full(n, np.nan), state.tx.copy()


def _ramsey_block(config, atoms, n, streams, squeezed):
    pv, ph = _pulses(config)
    state = make_css(atoms, config.eff_factor).replicate(n)
    tx_in = state.tx[0]
    phi1 = np.full(n, np.nan)
    if squeezed:
        eta_sc, pair_noise = ramsey_overrides(config)
        out1, state = qnd_pair_measurement(
            state,
            pv,
            ph,
            config.couplings,
            pair_noise,
            streams[STEP_QND1],
            decoherence=DecoherenceParams(eta_sc=eta_sc),
        )
        phi1 = out1.phi
    dephasing = DecoherenceParams(eta_dep=config.decoherence.dephasing_fraction(config.ramsey.time))
    state = free_precession(state, config.field_env, dephasing)
    out, _ = aoc_measurement(state, pv, config.couplings, config.noise, streams[STEP_AOC])
    tx_out = np.minimum(state.tx, tx_in)
    return tx_in, phi1, np.full(n, np.nan), out.phi, tx_out


_BLOCKS = {
    "readout": _readout_block,
    "independent": _independent_block,
    "squeezing": _squeezing_block,
    "ramsey_css": lambda c, a, n, s: _ramsey_block(c, a, n, s, False),
    "ramsey_squeezed": lambda c, a, n, s: _ramsey_block(c, a, n, s, True),
}


def _run_task(task):
    kind, config, atoms, n, seed, bin_index, block_index = task
    return _BLOCKS[kind](config, atoms, n, _streams(seed, bin_index, block_index))


def _run(config, kind, bins, seed=None, n_jobs=None):
    """Run `kind` for each ``(bin_index, atoms)`` in `bins`, ``config.trials`` each."""
    if config.trials < 1:
        raise InvalidArgumentError("a run needs at least one trial")
    seed = config.seed if seed is None else int(seed)
    n_jobs = config.workers if n_jobs is None else int(n_jobs)
    tasks = []
    for bin_index, atoms in bins:
        for block_index, start in enumerate(range(0, config.trials, BLOCK_SIZE)):
            n = min(BLOCK_SIZE, config.trials - start)
            tasks.append((kind, config, atoms, n, seed, bin_index, block_index))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    parts = []
    offset = 0
    for stream_id, ((_, _, _, n, _, _, _), (tx_in, phi1, phi2, phi_aoc, tx_out)) in enumerate(
        zip(tasks, results)
    ):
        parts.append(
            TrialRecords(
                trial_id=np.arange(offset, offset + n),
                tx_in=np.full(n, tx_in),
                phi1=phi1,
                phi2=phi2,
                phi_aoc=phi_aoc,
                tx_out=tx_out,
                seed_stream_id=np.full(n, stream_id),
            )
        )
        offset += n
    return TrialRecords.concat(parts)


def _bins(config, atom_counts):
    counts = (config.atoms_count,) if atom_counts is None else tuple(atom_counts)
    if not counts or any(not a > 0 for a in counts):
        raise InvalidArgumentError("atom counts must be positive")
    return list(enumerate(counts))


def run_readout_only(config: ExperimentConfig, seed=None, *, n_jobs=None):
    """Pulse pairs with an empty trap: read-out noise only, ``tx_in = 0``."""
    return _run(config, "readout", [(0, 0.0)], seed, n_jobs)


def run_independent_preparations(config, seed=None, *, atom_counts=None, n_jobs=None):
    """Two QND pairs on independently prepared coherent spin states."""
    return _run(config, "independent", _bins(config, atom_counts), seed, n_jobs)


def run_squeezing_sequence(config, seed=None, *, atom_counts=None, n_jobs=None):
    """CSS, QND pair (phi1), inter-pulse dephasing, QND pair (phi2).

    ``tx_out`` is the alignment of the state probed by the second pair.
    """
    return _run(config, "squeezing", _bins(config, atom_counts), seed, n_jobs)


def run_aoc_ramsey(config, squeezed, seed=None, *, atom_counts=None, n_jobs=None):
    """Ramsey field measurement read out by a single AOC pulse.

    The squeezed arm first prepares the state with a QND pair (recorded as
    ``phi1``); the CSS arm omits it. ``tx_out`` is the alignment entering the
    AOC pulse.
    """
    kind = "ramsey_squeezed" if squeezed else "ramsey_css"
    return _run(config, kind, _bins(config, atom_counts), seed, n_jobs)


def trap_loss_atom_counts(config):
    return config.sweep.atom_counts(config.atoms_count)


def run_trap_loss_sweep(config, seed=None, *, n_jobs=None):
    """Squeezing sequence over the trap-loss grid, then one empty-trap repetition."""
    bins = _bins(config, trap_loss_atom_counts(config))
    return with_readout_bin(config, _run(config, "squeezing", bins, seed, n_jobs), len(bins), seed, n_jobs)


def with_readout_bin(config, records, bin_index, seed=None, n_jobs=None):
    """Append an empty-trap repetition using streams of an unused `bin_index`."""
    readout = _run(config, "readout", [(bin_index, 0.0)], seed, n_jobs)
    readout.trial_id += len(records)
    if len(records):
        readout.seed_stream_id += records.seed_stream_id.max() + 1
    return TrialRecords.concat([records, readout])


def calibrate_alignment(config, seed=None, *, atom_counts=None):
    """Dispersive ``Tx`` calibration shots, one per trial, averaged per bin.

    Returns
    -------
    list of (tx_true, tx_estimate, tx_estimate_err)
    """
    seed = config.seed if seed is None else int(seed)
    pulse = ProbePulse.from_mode("circular_plus", config.dispersive_photons, config.probe.duration)
    out = []
    for bin_index, atoms in _bins(config, atom_counts):
        state = make_css(atoms, config.eff_factor).replicate(config.trials)
        rng = _streams(seed, bin_index, 0)[STEP_DISPERSIVE]
        shot = dispersive_alignment_signal(state, pulse, config.couplings, config.noise, rng)
        tx_est, _ = tx_from_dispersive(shot, config.couplings)
        err = float(np.std(tx_est, ddof=1) / math.sqrt(len(tx_est)))
        out.append((float(state.tx[0]), float(np.mean(tx_est)), err))
    return out


@dataclass(frozen=True)
class BinSummary:
    """Statistics at one nominal alignment; NaN marks quantities not measured."""

    tx: float
    n: int
    var_phi1: float
    var_phi1_err: float
    var_phi2: float
    var_phi2_err: float
    chi: float
    var_cond: float
    var_cond_err: float
    contrast: float
    noise_reduction_db: float
    xi2_m: float
    sens_css: float
    sens_css_err: float
    sens_sq: float
    sens_sq_err: float

    @property
    def improvement(self):
        """Fractional reduction of the Zeeman-energy uncertainty by squeezing."""
        return float(1 - self.sens_sq / self.sens_css)


@dataclass(frozen=True)
class RunSummary:
    bins: tuple
    var_readout: float
    var_readout_err: float
    readout_subtracted: bool
    fit_phi1: NoiseScalingFit | None
    fit_phi2: NoiseScalingFit | None
    report: SqueezingReport | None

    def bin_at(self, tx, rel_tol=1e-9):
        for b in self.bins:
            if math.isclose(b.tx, tx, rel_tol=rel_tol):
                return b
        raise KeyError(tx)


def _quad_sum(*errs):
    return math.sqrt(sum(e * e for e in errs))


def _sensitivity_noise(samples, config, seed):
    return variance_estimate(samples, config.error_method, random_state=seed)


def summarize(records, config=None, *, var_readout=None):
    """Aggregate trial records into per-alignment statistics, fits and a report.

    Read-out noise is subtracted from variances and conditional variances,
    using `var_readout` if given, else the empty-trap (``tx_in = 0``) bin if
    present; the empty-trap bin itself then shows variances near zero.
    Sensitivities are never read-out subtracted.
    """
    config = ExperimentConfig() if config is None else config
    if len(records) == 0:
        raise DegenerateInputError("no records to summarize")
    txs = np.unique(records.tx_in)
    groups = {tx: records.select(records.tx_in == tx) for tx in txs}
    small = [tx for tx, g in groups.items() if len(g) < 3]
    if small:
        raise DegenerateInputError(f"fewer than 3 records at tx = {small}")

    ro_err = 0.0
    if var_readout is not None:
        ro = float(var_readout)
    elif 0.0 in groups:
        g = groups[0.0]
        e1 = variance_estimate(g.phi1)
        e2 = variance_estimate(g.phi2)
        ro = (e1.value + e2.value) / 2
        ro_err = _quad_sum(e1.stderr, e2.stderr) / 2
    else:
        ro = math.nan
    subtract = math.isfinite(ro)
    ro_sub = ro if subtract else 0.0

    pv, _ = _pulses(config)
    nan = math.nan
    bins = []
    for tx in txs:
        g = groups[tx]
        row = dict(
            tx=float(tx), n=len(g), var_phi1=nan, var_phi1_err=nan, var_phi2=nan, var_phi2_err=nan,
            chi=nan, var_cond=nan, var_cond_err=nan, contrast=nan, noise_reduction_db=nan,
            xi2_m=nan, sens_css=nan, sens_css_err=nan, sens_sq=nan, sens_sq_err=nan,
        )
        has1 = np.isfinite(g.phi1)
        if tx > 0:
            row["contrast"] = min(float(np.mean(g.tx_out) / tx), 1.0)
        if np.all(has1) and np.all(np.isfinite(g.phi2)):
            e1, e2 = variance_estimate(g.phi1), variance_estimate(g.phi2)
            cond = conditional_variance(g.phi1, g.phi2, ro_sub)
            row.update(
                var_phi1=e1.value - ro_sub,
                var_phi1_err=_quad_sum(e1.stderr, ro_err),
                var_phi2=e2.value - ro_sub,
                var_phi2_err=_quad_sum(e2.stderr, ro_err),
                chi=chi_estimator(g.phi1, g.phi2),
                var_cond=cond.value,
                var_cond_err=_quad_sum(cond.stderr, ro_err),
            )
            if tx > 0 and cond.value > 0:
                row["noise_reduction_db"] = db(cond.value / (tx / 2))
                row["xi2_m"] = wineland_xi2(cond.value, tx / 2, row["contrast"])
        aoc = np.isfinite(g.phi_aoc)
        if tx > 0 and np.any(aoc):
            css_arm = g.select(aoc & ~has1)
            sq_arm = g.select(aoc & has1)
            scale = predicted_sensitivity(1.0, config.couplings, pv.sx, tx, config.ramsey.time)
            if len(css_arm) >= 3:
                e = _sensitivity_noise(css_arm.phi_aoc, config, config.seed)
                row["sens_css"] = math.sqrt(e.value) * scale
                row["sens_css_err"] = row["sens_css"] * e.stderr / (2 * e.value)
            if len(sq_arm) >= 3:
                e1 = variance_estimate(sq_arm.phi1)
                chi = chi_estimator(sq_arm.phi1, sq_arm.phi_aoc)
                e = _sensitivity_noise(sq_arm.phi_aoc - chi * sq_arm.phi1, config, config.seed)
                row.update(
                    var_phi1=e1.value - ro_sub,
                    var_phi1_err=_quad_sum(e1.stderr, ro_err),
                    chi=chi,
                    sens_sq=math.sqrt(e.value) * scale,
                    sens_sq_err=math.sqrt(e.value) * scale * e.stderr / (2 * e.value),
                )
        bins.append(BinSummary(**row))

    atomic = [b for b in bins if b.tx > 0]
    fit1 = fit2 = None
    ok1 = [b for b in atomic if math.isfinite(b.var_phi1)]
    ok2 = [b for b in atomic if math.isfinite(b.var_phi2)]
    if len(ok1) >= 3:
        fit1 = quadratic_noise_fit(
            [b.tx for b in ok1], [b.var_phi1 for b in ok1], [b.var_phi1_err for b in ok1], tx_unit=FIT_TX_UNIT
        )
    if len(ok2) >= 3:
        fit2 = quadratic_noise_fit(
            [b.tx for b in ok2], [b.var_phi2 for b in ok2], [b.var_phi2_err for b in ok2], tx_unit=FIT_TX_UNIT
        )

    report = None
    if ok2:
        top = max(ok2, key=lambda b: b.tx)
        g = groups[top.tx]
        report = squeezing_report(g.phi1, g.phi2, ro_sub, top.tx, top.contrast)

    return RunSummary(
        bins=tuple(bins),
        var_readout=ro,
        var_readout_err=ro_err if subtract else math.nan,
        readout_subtracted=subtract,
        fit_phi1=fit1,
        fit_phi2=fit2,
        report=report,
    )
