"""Closed-form predictions for the Gaussian QND model.

Nothing here touches the state-propagation code in :mod:`spinsqueeze.dynamics`;
these formulas are the independent reference for Monte Carlo output.
"""

from dataclasses import dataclass
import math

from ._validation import InvalidArgumentError, check_positive

MU_B_OVER_H = 1.39962e10  # Hz/T
TESLA_TO_FT = 1e15


@dataclass(frozen=True)
class OraclePrediction:
    tx: float
    zeta: float
    var_conditional: float
    var_second: float
    var_second_conditional: float
    sensitivity_e_over_h: float
    field_sensitivity: float

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value >= 0:
                raise InvalidArgumentError(f"{name} must be non-negative, got {value!r}")


def zeta(couplings, n_photons, tx):
    """Measurement signal-to-noise ratio ``kappa1**2 * N_L * Tx``."""
    check_positive(n_photons, "n_photons", allow_zero=True)
    check_positive(tx, "tx", allow_zero=True)
    return couplings.kappa1**2 * n_photons * tx


def predicted_conditional_var(tx, zeta):
    """Projection noise ``tx/2`` reduced by ``1 + zeta``."""
    check_positive(tx, "tx")
    check_positive(zeta, "zeta", allow_zero=True)
    return (tx / 2) / (1 + zeta)


def predicted_second_var(tx, contrast):
    """Unconditional variance seen by a later measurement, ``Tx_out / 2``."""
    return contrast * check_positive(tx, "tx") / 2


def predicted_second_conditional_var(tx, zeta, contrast):
    """Conditional variance of a later measurement after coherence loss.

    Binomial loss to `contrast` shrinks the conditional variance by
    ``contrast**2`` and adds partition noise ``contrast (1 - contrast) tx/2``.
    Reduces to :func:`predicted_conditional_var` at unit contrast.
    """
    if not 0 < contrast <= 1:
        raise InvalidArgumentError(f"contrast must lie in (0, 1], got {contrast!r}")
    cond = predicted_conditional_var(tx, zeta)
    return contrast**2 * cond + contrast * (1 - contrast) * tx / 2


def predicted_sensitivity(delta_t, couplings, sx, tx, time):
    """Zeeman-energy sensitivity ``dT / (kappa2 <Sx> <Tx> sqrt(T))`` in Hz/sqrt(Hz)."""
    check_positive(delta_t, "delta_t", allow_zero=True)
    for name, value in (("sx", sx), ("tx", tx), ("time", time)):
        check_positive(value, name)
    check_positive(couplings.kappa2, "kappa2")
    return delta_t / (couplings.kappa2 * sx * tx * math.sqrt(time))


def field_sensitivity(delta_e_h, volume_cm3, g_factor=0.5):
    """Volume-normalized field sensitivity in T*sqrt(cm^3)/sqrt(Hz).

    The m = +-1 splitting is ``2 g_F mu_B B``, so ``dB = d(E/h) / (2 g_F mu_B/h)``.
    """
    check_positive(delta_e_h, "delta_e_h", allow_zero=True)
    check_positive(volume_cm3, "volume_cm3")
    check_positive(g_factor, "g_factor")
    return delta_e_h / (2 * g_factor * MU_B_OVER_H) * math.sqrt(volume_cm3)


def predict(
    couplings, n_photons, tx, *, contrast=1.0, time=5e-6, volume_cm3=3.7e-6, g_factor=0.5, squeezed=False
):
    """Bundle the oracle quantities for one alignment `tx`.

    `n_photons` is the per-pulse photon number and ``<Sx> = n_photons / 2``.
    The sensitivities use projection noise ``sqrt(tx/2)``, or the conditional
    noise when `squeezed` is set.
    """
    z = zeta(couplings, n_photons, tx)
    cond = predicted_conditional_var(tx, z)
    noise = math.sqrt(cond if squeezed else tx / 2)
    sens = predicted_sensitivity(noise, couplings, n_photons / 2, tx, time)
    return OraclePrediction(
        tx=float(tx),
        zeta=z,
        var_conditional=cond,
        var_second=predicted_second_var(tx, contrast),
        var_second_conditional=predicted_second_conditional_var(tx, z, contrast),
        sensitivity_e_over_h=sens,
        field_sensitivity=field_sensitivity(sens, volume_cm3, g_factor),
    )
