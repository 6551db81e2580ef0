"""Domain records for the collective spin-1 ensemble and its probe light.

The atomic state is Gaussian: first moments and a 3x3 covariance of the
collective alignment ``(Tx, Ty)`` and orientation ``Fz``, in spin units.
A state may carry a *batch* of means, shape ``(n, 3)``, that share one
covariance. This is exact for Gaussian conditioning, where the covariance
update does not depend on the measurement record, and lets Monte Carlo
trials be propagated together.
"""

from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np

from ._validation import InvalidArgumentError, check_fraction, check_positive

TX, TY, FZ = 0, 1, 2


@dataclass(frozen=True)
class Couplings:
    """Atom-light coupling constants in radians per spin.

    Attributes
    ----------
    kappa1 : float
        Vector (Faraday) coupling of the linearly polarized probe.
    kappa2 : float
        Tensor coupling of the linearly polarized probe. Zero gives the
        pure-Faraday limit.
    kappa2_aux : float
        Tensor coupling of the circularly polarized auxiliary probe.
    """

    kappa1: float = 1.47e-7
    kappa2: float = 7.54e-9
    kappa2_aux: float = 0.9e-7

    def __post_init__(self):
        check_positive(self.kappa1, "kappa1")
        check_positive(self.kappa2, "kappa2", allow_zero=True)
        check_positive(self.kappa2_aux, "kappa2_aux")
        if not self.kappa2 < self.kappa1:
            raise InvalidArgumentError(
                f"kappa2 ({self.kappa2}) must be smaller than kappa1 ({self.kappa1})"
            )


class PulseMode(str, Enum):
    LINEAR_V = "linear_v"
    LINEAR_H = "linear_h"
    CIRCULAR_PLUS = "circular_plus"

    @property
    def is_linear(self):
        return self is not PulseMode.CIRCULAR_PLUS


@dataclass(frozen=True)
class ProbePulse:
    """Pulse-integrated Stokes means of a fully polarized probe pulse."""

    stokes_mean: tuple
    photons: float
    duration: float
    mode: PulseMode

    def __post_init__(self):
        object.__setattr__(self, "mode", PulseMode(self.mode))
        check_positive(self.photons, "photons")
        check_positive(self.duration, "duration")
        s = tuple(float(v) for v in self.stokes_mean)
        if len(s) != 3:
            raise InvalidArgumentError("stokes_mean must have three components")
        object.__setattr__(self, "stokes_mean", s)
        half = self.photons / 2
        if s[0] ** 2 + s[1] ** 2 + s[2] ** 2 > half**2 * (1 + 1e-9):
            raise InvalidArgumentError("Stokes vector exceeds the photon number")
        expected = {
            PulseMode.LINEAR_V: (0, half),
            PulseMode.LINEAR_H: (0, -half),
            PulseMode.CIRCULAR_PLUS: (2, half),
        }[self.mode]
        if not math.isclose(s[expected[0]], expected[1], rel_tol=1e-12):
            raise InvalidArgumentError(f"Stokes mean {s} inconsistent with mode {self.mode.value}")

    @classmethod
    def from_mode(cls, mode, photons, duration=2e-6):
        mode = PulseMode(mode)
        half = float(photons) / 2
        stokes = {
            PulseMode.LINEAR_V: (half, 0.0, 0.0),
            PulseMode.LINEAR_H: (-half, 0.0, 0.0),
            PulseMode.CIRCULAR_PLUS: (0.0, 0.0, half),
        }[mode]
        return cls(stokes, photons, duration, mode)

    @property
    def sx(self):
        return self.stokes_mean[0]

    @property
    def sz(self):
        return self.stokes_mean[2]


@dataclass(frozen=True)
class DecoherenceParams:
    """Depolarization budget.

    Attributes
    ----------
    eta_sc : float
        Fraction of coherence lost to probe scattering per QND pulse pair.
    eta_dep : float or None
        Fraction lost to dephasing per inter-measurement interval. ``None``
        derives it from `tau_c` and the interval length instead.
    tau_c : float or None
        Spin coherence time in seconds (Gaussian decay).
    """

    eta_sc: float = 0.0
    eta_dep: float | None = 0.0
    tau_c: float | None = None

    def __post_init__(self):
        check_fraction(self.eta_sc, "eta_sc")
        if self.eta_dep is not None:
            check_fraction(self.eta_dep, "eta_dep")
        if self.tau_c is not None:
            check_positive(self.tau_c, "tau_c")

    @property
    def contrast(self):
        """Surviving alignment fraction ``(1 - eta_sc)(1 - eta_dep)``."""
        return (1 - self.eta_sc) * (1 - (self.eta_dep or 0.0))

    def dephasing_fraction(self, interval):
        """Coherence lost during `interval` seconds; explicit `eta_dep` wins."""
        if self.eta_dep is not None:
            return self.eta_dep
        if self.tau_c is None:
            return 0.0
        return 1.0 - math.exp(-((interval / self.tau_c) ** 2))


@dataclass(frozen=True)
class FieldEnvironment:
    delta_e_hz: float
    precession_time: float

    def __post_init__(self):
        if not math.isfinite(self.delta_e_hz):
            raise InvalidArgumentError("delta_e_hz must be finite")
        check_positive(self.precession_time, "precession_time")

    @property
    def angle(self):
        """Precession angle ``2*pi*(dE/h)*T`` of the m = +-1 coherence."""
        return 2 * math.pi * self.delta_e_hz * self.precession_time


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CollectiveSpinState:
    """Gaussian moments of ``(Tx, Ty, Fz)``.

    Attributes
    ----------
    mean : ndarray, shape (3,) or (n, 3)
        First moments; a 2-d array holds one row per Monte Carlo trial.
    cov : ndarray, shape (3, 3)
        Symmetric positive semidefinite covariance, shared by all rows.
    n_eff : float
        Effective atom number.
    coherent_fraction : float
        Fraction of `n_eff` still in the prepared coherent state; sets the
        partition noise added when coherence is lost.
    """

    mean: np.ndarray
    cov: np.ndarray
    n_eff: float
    coherent_fraction: float = 1.0

    def __post_init__(self):
        mean = _frozen(self.mean)
        cov = np.array(self.cov, dtype=float)
        if mean.shape[-1:] != (3,) or mean.ndim > 2:
            raise InvalidArgumentError(f"mean must have shape (3,) or (n, 3), got {mean.shape}")
        if cov.shape != (3, 3):
            raise InvalidArgumentError(f"cov must be 3x3, got {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidArgumentError("state moments must be finite")
        if not np.array_equal(cov, cov.T):
            raise InvalidArgumentError("cov must be stored exactly symmetric")
        check_positive(self.n_eff, "n_eff")
        check_fraction(self.coherent_fraction, "coherent_fraction", closed_right=True)
        trace = np.trace(cov)
        if np.linalg.eigvalsh(cov)[0] < -1e-9 * max(trace, 0.0):
            raise InvalidArgumentError("cov is not positive semidefinite")
        if np.any(np.abs(mean) > self.n_eff / 2 + 1e-9 * self.n_eff):
            raise InvalidArgumentError("mean exceeds the collective spin length n_eff/2")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def tx(self):
        return self.mean[..., TX]

    @property
    def ty(self):
        return self.mean[..., TY]

    @property
    def fz(self):
        return self.mean[..., FZ]

    @property
    def batch_size(self):
        """Number of trial rows, or ``None`` for a single state."""
        return self.mean.shape[0] if self.mean.ndim == 2 else None

    def replicate(self, n):
        """Copy the (single) mean into `n` identical trial rows."""
        if self.mean.ndim != 1:
            raise InvalidArgumentError("state is already batched")
        return self.evolve(mean=np.tile(self.mean, (int(n), 1)))

    def evolve(self, **changes):
        """Return a copy with fields replaced; `cov` is re-symmetrized."""
        if "cov" in changes:
            c = np.asarray(changes["cov"], dtype=float)
            changes["cov"] = (c + c.T) / 2
        values = {
            "mean": self.mean,
            "cov": self.cov,
            "n_eff": self.n_eff,
            "coherent_fraction": self.coherent_fraction,
        }
        values.update(changes)
        return CollectiveSpinState(**values)


def make_css(n_atoms, eff_factor=0.9):
    """Coherent spin state fully aligned along ``Tx``.

    ``Var(Ty) = Var(Fz) = Tx/2 = n_eff/4``; ``Var(Tx)`` is taken as zero
    since ``Tx`` is the unmeasured mean direction.
    """
    n_atoms = check_positive(n_atoms, "n_atoms")
    eff = float(eff_factor)
    if not (0 < eff <= 1):
        raise InvalidArgumentError(f"eff_factor must lie in (0, 1], got {eff_factor!r}")
    n_eff = eff * n_atoms
    return CollectiveSpinState(
        mean=[n_eff / 2, 0.0, 0.0],
        cov=np.diag([0.0, n_eff / 4, n_eff / 4]),
        n_eff=n_eff,
    )


def mixing_angle(couplings: Couplings, pulse: ProbePulse) -> float:
    """Alignment-orientation mixing angle, ``tan(theta) = kappa2 |Sx| / 2``."""
    if not pulse.mode.is_linear:
        raise InvalidArgumentError("mixing angle is defined for linearly polarized pulses only")
    return math.atan(couplings.kappa2 * abs(pulse.sx) / 2)


def mixed_direction(theta):
    """Unit vector of ``Fz cos(theta) + Ty sin(theta)`` in (Tx, Ty, Fz) order."""
    return np.array([0.0, math.sin(theta), math.cos(theta)])


def mixed_variable_stats(state: CollectiveSpinState, theta: float):
    """Mean and variance of the mixed variable ``Fz cos(theta) + Ty sin(theta)``.

    Returns
    -------
    mean : float or ndarray
        One value per trial row for batched states.
    variance : float
    """
    u = mixed_direction(theta)
    return state.mean @ u, max(float(u @ state.cov @ u), 0.0)
