"""Pulse-atom interaction maps, decoherence and Gaussian measurement updates.

Every measurement outcome is expressed in units of the mixed variable
``T = Fz cos(theta) + Ty sin(theta)``, so that ``<phi> = <T>`` and the atomic
contribution to ``Var(phi)`` is exactly ``Var(T)``. The read-out variance is
referred to the same units through the measurement signal-to-noise ratio
``zeta = kappa1**2 * N_L * Tx`` on a coherent spin state.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._validation import InvalidArgumentError, check_positive
from .model import (
    FZ,
    TX,
    TY,
    CollectiveSpinState,
    Couplings,
    DecoherenceParams,
    FieldEnvironment,
    ProbePulse,
    PulseMode,
    mixed_direction,
    mixing_angle,
)

KINDS = ("dispersive", "aoc_single", "qnd_pair")


@dataclass(frozen=True)
class MeasurementOutcome:
    """Measured value(s) and the read-out variance referred to them.

    `phi` is a float for a single state and an array with one entry per
    trial for a batched state. Dispersive outcomes are polarization
    rotation angles in radians; the others are in spin units.
    """

    phi: object
    readout_variance: float
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown outcome kind {self.kind!r}")
        # zero is allowed: it is the noiseless-detector limit
        if not self.readout_variance >= 0:
            raise InvalidArgumentError("readout_variance must be non-negative")


@dataclass(frozen=True)
class NoiseModel:
    """Polarimeter read-out noise.

    Attributes
    ----------
    technical_db : float
        Technical noise power relative to light shot noise, in dB.
        ``-inf`` removes it.
    include_shot_noise : bool
        Whether optical shot noise is present.
    zeta_photons : {"pulse", "pair"}
        Photon number entering ``zeta`` for a pulse pair: the photons of one
        pulse or of both pulses.
    snr_efficiency : float
        Multiplies the signal-to-noise ratio, i.e. divides the read-out
        variance. Used to impose a measured noise reduction.
    """

    technical_db: float = -19.0
    include_shot_noise: bool = True
    zeta_photons: str = "pulse"
    snr_efficiency: float = 1.0

    def __post_init__(self):
        if math.isnan(self.technical_db) or self.technical_db == math.inf:
            raise InvalidArgumentError("technical_db must be a number below +inf")
        if self.zeta_photons not in ("pulse", "pair"):
            raise InvalidArgumentError("zeta_photons must be 'pulse' or 'pair'")
        check_positive(self.snr_efficiency, "snr_efficiency")

    @property
    def power_factor(self):
        """Read-out noise power in units of the light shot noise."""
        return (1.0 if self.include_shot_noise else 0.0) + 10 ** (self.technical_db / 10)


def _require_rng(rng, phi):
    if phi is not None:
        return None
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise InvalidArgumentError("stochastic operations need an explicit numpy Generator or seed")


def _rotation(angle, i, j):
    r = np.eye(3)
    c, s = math.cos(angle), math.sin(angle)
    r[i, i], r[i, j] = c, -s
    r[j, i], r[j, j] = s, c
    return r


def _rotate(state, r):
    return state.evolve(mean=state.mean @ r.T, cov=r @ state.cov @ r.T)


def probe_rotation_update(state: CollectiveSpinState, pulse: ProbePulse, couplings: Couplings):
    """Tensor-light-shift rotation in the ``Ty``-``Fz`` plane by ``kappa2 * Sx``."""
    if not pulse.mode.is_linear:
        raise InvalidArgumentError("probe rotation needs a linearly polarized pulse")
    angle = couplings.kappa2 * pulse.sx
    if angle == 0:
        return state
    return _rotate(state, _rotation(angle, TY, FZ))


def _lose_coherence(state, keep):
    """Binomial loss of coherence: a fraction ``1 - keep`` leaves the state.

    Means scale by `keep`; the covariance scales by ``keep**2`` and gains
    partition noise ``keep (1 - keep)`` times the projection noise of the
    coherent population, on the measured ``Ty`` and ``Fz`` components.
    """
    if keep == 1.0:
        return state
    d = np.full(3, keep)
    cov = state.cov * np.outer(d, d)
    noise = keep * (1 - keep) * state.coherent_fraction * state.n_eff / 4
    cov[TY, TY] += noise
    cov[FZ, FZ] += noise
    return state.evolve(
        mean=state.mean * keep,
        cov=cov,
        coherent_fraction=state.coherent_fraction * keep,
    )


def apply_decoherence(state: CollectiveSpinState, params: DecoherenceParams):
    """Scattering and dephasing loss, ``Tx_out = (1-eta_sc)(1-eta_dep) Tx_in``.

    A coherent spin state keeps projection-noise statistics of its reduced
    alignment: ``Var(T)`` goes from ``Tx_in/2`` to ``Tx_out/2``.
    """
    return _lose_coherence(state, params.contrast)


def free_precession(state: CollectiveSpinState, env: FieldEnvironment, decoherence=None):
    """Zeeman rotation ``Tx -> Ty`` by ``2*pi*(dE/h)*T``, then optional dephasing.

    With `decoherence`, the coherence lost over the interval is its explicit
    ``eta_dep`` if set, else the Gaussian decay ``exp(-(T/tau_c)**2)``.
    """
    out = state
    if env.angle != 0:
        out = _rotate(out, _rotation(env.angle, TX, TY))
    if decoherence is not None:
        out = _lose_coherence(out, 1.0 - decoherence.dephasing_fraction(env.precession_time))
    return out


def readout_noise_variance(pulse_photons, n_pulses, couplings, theta=0.0, noise=None, *, gain="zeta"):
    """Polarimeter read-out variance referred to the mixed variable, in spin^2.

    The shot noise of ``n_pulses`` pulses of ``N_L`` photons, ``n_pulses N_L / 4``
    in ``Sy`` units, is divided by the squared measurement gain. With the
    default ``gain="zeta"`` the gain is fixed so that a pulse pair on a
    coherent spin state has signal-to-noise ``kappa1**2 N_L Tx``:

        Var(phi_RO) = F / (n_pulses * m * kappa1**2 * N_L * efficiency)

    with ``F`` the noise power factor and ``m = 2`` when `noise.zeta_photons`
    counts both pulses of a pair. ``gain="physical"`` uses the bare
    per-pulse gain ``kappa1 <Sx> / cos(theta)`` instead, which multiplies the
    result by ``cos(theta)**2``.
    """
    noise = NoiseModel() if noise is None else noise
    n_photons = check_positive(pulse_photons, "pulse_photons")
    if n_pulses not in (1, 2):
        raise InvalidArgumentError(f"n_pulses must be 1 or 2, got {n_pulses!r}")
    m = 2 if noise.zeta_photons == "pair" else 1
    var = noise.power_factor / (n_pulses * m * couplings.kappa1**2 * n_photons * noise.snr_efficiency)
    if gain == "physical":
        var *= math.cos(theta) ** 2
    elif gain != "zeta":
        raise InvalidArgumentError(f"unknown gain convention {gain!r}")
    return var


def condition_on_mixed(state, theta, readout_variance, rng=None, phi=None):
    """Sample (or accept) a measurement of ``T`` and return the Gaussian posterior.

    Parameters
    ----------
    state : CollectiveSpinState
    theta : float
        Mixing angle of the measured variable.
    readout_variance : float
        Variance of the additive read-out noise, spin^2; ``inf`` gives an
        uninformative measurement.
    rng : numpy.random.Generator, optional
        Required unless `phi` is supplied.
    phi : float or ndarray, optional
        Forced outcome(s) instead of a random draw.

    Returns
    -------
    phi : float or ndarray
    posterior : CollectiveSpinState
    """
    u = mixed_direction(theta)
    pu = state.cov @ u
    var_t = float(u @ pu)
    # round-off floor: a perfectly measured variable stays exactly determined
    if var_t <= 1e-12 * max(float(np.trace(state.cov)), 0.0):
        var_t = 0.0
    total = var_t + readout_variance
    mean_t = state.mean @ u
    if phi is None:
        rng = _require_rng(rng, phi)
        shape = () if state.batch_size is None else (state.batch_size,)
        draw = rng.standard_normal(size=shape)
        phi = mean_t + math.sqrt(total) * draw
    else:
        phi = np.asarray(phi, dtype=float) if state.batch_size is not None else float(phi)
    if total == 0 or math.isinf(total):
        return phi, state
    gain = pu / total
    innovation = np.asarray(phi - mean_t)[..., None]
    posterior = state.evolve(
        mean=state.mean + innovation * gain,
        cov=state.cov - np.outer(pu, pu) / total,
    )
    return phi, posterior


def _check_pair(pulse_v, pulse_h):
    if pulse_v.mode is not PulseMode.LINEAR_V or pulse_h.mode is not PulseMode.LINEAR_H:
        raise InvalidArgumentError("a QND pair needs one linear_v and one linear_h pulse, in that order")
    if pulse_v.photons != pulse_h.photons:
        raise InvalidArgumentError("QND pair pulses must carry equal photon numbers")


def qnd_pair_measurement(
    state, pulse_v, pulse_h, couplings, noise=None, rng=None, *, decoherence=None, phi=None
):
    """Synthesized QND measurement of ``T`` with a v/h pulse pair.

    The second pulse reverses the ``Ty``-``Fz`` rotation of the first, so the
    posterior carries no net probe rotation. Scattering loss ``eta_sc`` of the
    pair, if given, is applied after conditioning.

    Returns
    -------
    outcome : MeasurementOutcome
    posterior : CollectiveSpinState
    """
    _check_pair(pulse_v, pulse_h)
    noise = NoiseModel() if noise is None else noise
    theta = mixing_angle(couplings, pulse_v)
    ro = readout_noise_variance(pulse_v.photons, 2, couplings, theta, noise)
    phi, post = condition_on_mixed(state, theta, ro, _require_rng(rng, phi), phi)
    if decoherence is not None:
        post = _lose_coherence(post, 1.0 - decoherence.eta_sc)
    return MeasurementOutcome(phi, ro, "qnd_pair"), post


def aoc_measurement(state, pulse, couplings, noise=None, rng=None, *, decoherence=None, phi=None):
    """Single-pulse alignment-to-orientation conversion measurement.

    Same outcome model as the pulse pair with single-pulse read-out noise.
    The posterior additionally carries the uncancelled probe rotation and
    the scattering loss of one pulse, ``1 - sqrt(1 - eta_sc)``.
    """
    if not pulse.mode.is_linear:
        raise InvalidArgumentError("AOC measurement needs a linearly polarized pulse")
    noise = NoiseModel() if noise is None else noise
    theta = mixing_angle(couplings, pulse)
    ro = readout_noise_variance(pulse.photons, 1, couplings, theta, noise)
    phi, post = condition_on_mixed(state, theta, ro, _require_rng(rng, phi), phi)
    post = probe_rotation_update(post, pulse, couplings)
    if decoherence is not None:
        post = _lose_coherence(post, math.sqrt(1.0 - decoherence.eta_sc))
    return MeasurementOutcome(phi, ro, "aoc_single"), post


def dispersive_alignment_signal(state, pulse, couplings, noise=None, rng=None, *, phi=None):
    """Dispersive read-out of ``Tx`` with a circularly polarized probe.

    The probe acquires ``dSy = -kappa2_aux * Sz * Tx``. The outcome is the
    polarization rotation angle ``-dSy / (2 Sz) = kappa2_aux * Tx / 2`` in
    radians, with shot-noise variance ``F / (4 N_L)``. The state is not
    updated.
    """
    if pulse.mode is not PulseMode.CIRCULAR_PLUS:
        raise InvalidArgumentError("dispersive measurement needs a circular_plus pulse")
    noise = NoiseModel() if noise is None else noise
    half_gain = couplings.kappa2_aux / 2
    ro = noise.power_factor / (4 * pulse.photons)
    if phi is None:
        rng = _require_rng(rng, phi)
        shape = () if state.batch_size is None else (state.batch_size,)
        sd = math.sqrt(half_gain**2 * state.cov[TX, TX] + ro)
        phi = half_gain * state.tx + sd * rng.standard_normal(size=shape)
    return MeasurementOutcome(phi, ro, "dispersive")


def tx_from_dispersive(outcome: MeasurementOutcome, couplings: Couplings):
    """Invert a dispersive outcome to an alignment estimate and its variance."""
    scale = 2 / couplings.kappa2_aux
    return np.asarray(outcome.phi) * scale, outcome.readout_variance * scale**2
