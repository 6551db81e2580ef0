"""Experiment configuration and its flat ``section.key = value`` text format.

Every key is optional; omitted keys take the experimental defaults below.
Unknown keys, wrong types and out-of-range values are rejected with the
offending key and line number.
"""

import ast
from dataclasses import dataclass, field, replace
import math

from ._validation import InvalidArgumentError
from .dynamics import NoiseModel
from .model import Couplings, DecoherenceParams, FieldEnvironment


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class ProbeSettings:
    photons_per_pulse: float = 2e8
    duration: float = 2e-6
    spacing: float = 5e-6


@dataclass(frozen=True)
class SweepSettings:
    """Alignment grid: explicit atom counts, or a trap-loss cycle from ``atoms.count``."""

    loss_factor: float = 0.85
    steps: int = 20
    atoms: tuple | None = None

    def atom_counts(self, start):
        if self.atoms is not None:
            return tuple(float(a) for a in self.atoms)
        return tuple(start * self.loss_factor**k for k in range(self.steps))


@dataclass(frozen=True)
class RamseySettings:
    """Ramsey field measurement; the optional overrides impose measured values.

    `noise_reduction_db` is the conditional noise of the squeezed state at
    the AOC pulse relative to ``Tx/2``, measured at `reference_tx`; `contrast`
    is the alignment surviving the QND pair and the precession interval.
    """

    time: float = 5e-6
    noise_reduction_db: float | None = None
    contrast: float | None = None
    reference_tx: float = 3.7e5


@dataclass(frozen=True)
class ExperimentConfig:
    atoms_count: float = 8.5e5
    eff_factor: float = 0.9
    couplings: Couplings = field(default_factory=Couplings)
    probe: ProbeSettings = field(default_factory=ProbeSettings)
    dispersive_photons: float = 1e6
    noise: NoiseModel = field(default_factory=NoiseModel)
    decoherence: DecoherenceParams = field(
        default_factory=lambda: DecoherenceParams(eta_sc=0.093, eta_dep=0.034, tau_c=290e-6)
    )
    delta_e_hz: float = 2900.0
    ramsey: RamseySettings = field(default_factory=RamseySettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    trials: int = 2000
    seed: int = 1
    workers: int = 1
    error_method: str = "gaussian"
    volume_cm3: float = 3.7e-6
    g_factor: float = 0.5

    def __post_init__(self):
        if self.trials < 0:
            raise InvalidArgumentError("trials must be >= 0")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")

    @property
    def field_env(self):
        return FieldEnvironment(self.delta_e_hz, self.ramsey.time)

    def with_overrides(self, *, seed=None, trials=None):
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if trials is not None:
            changes["trials"] = int(trials)
        return replace(self, **changes)


def _positive(v):
    return v > 0


def _fraction(v):
    return 0 <= v < 1


def _nonneg(v):
    return v >= 0


# key -> (section, attribute, kind, check, divisor); file value / divisor gives SI units
_KEYS = {
    "couplings.kappa1": ("couplings", "kappa1", float, _positive, 1.0),
    "couplings.kappa2": ("couplings", "kappa2", float, _nonneg, 1.0),
    "couplings.kappa2_aux": ("couplings", "kappa2_aux", float, _positive, 1.0),
    "atoms.count": (None, "atoms_count", float, _positive, 1.0),
    "atoms.eff_factor": (None, "eff_factor", float, lambda v: 0 < v <= 1, 1.0),
    "probe.photons_per_pulse": ("probe", "photons_per_pulse", float, _positive, 1.0),
    "probe.duration_us": ("probe", "duration", float, _positive, 1e6),
    "probe.spacing_us": ("probe", "spacing", float, _positive, 1e6),
    "dispersive.photons": (None, "dispersive_photons", float, _positive, 1.0),
    "readout.technical_db": ("noise", "technical_db", float, lambda v: v < math.inf, 1.0),
    "readout.shot_noise": ("noise", "include_shot_noise", bool, None, None),
    "readout.zeta_photons": ("noise", "zeta_photons", str, lambda v: v in ("pulse", "pair"), None),
    "decoherence.eta_sc": ("decoherence", "eta_sc", float, _fraction, 1.0),
    "decoherence.eta_dep": ("decoherence", "eta_dep", "optional_float", _fraction, 1.0),
    "decoherence.tau_c_us": ("decoherence", "tau_c", "optional_float", _positive, 1e6),
    "field.delta_e_hz": (None, "delta_e_hz", float, math.isfinite, 1.0),
    "ramsey.time_us": ("ramsey", "time", float, _positive, 1e6),
    "ramsey.noise_reduction_db": ("ramsey", "noise_reduction_db", "optional_float", lambda v: v < 0, 1.0),
    "ramsey.contrast": ("ramsey", "contrast", "optional_float", lambda v: 0 < v <= 1, 1.0),
    "ramsey.reference_tx": ("ramsey", "reference_tx", float, _positive, 1.0),
    "sweep.loss_factor": ("sweep", "loss_factor", float, lambda v: 0 < v <= 1, 1.0),
    "sweep.steps": ("sweep", "steps", int, _positive, None),
    "sweep.atoms": ("sweep", "atoms", "optional_list", _positive, 1.0),
    "mc.trials": (None, "trials", int, _nonneg, None),
    "mc.seed": (None, "seed", int, _nonneg, None),
    "mc.workers": (None, "workers", int, _positive, None),
    "analysis.error_method": (None, "error_method", str, lambda v: v in ("gaussian", "bootstrap"), None),
    "oracle.volume_cm3": (None, "volume_cm3", float, _positive, 1.0),
    "oracle.g_factor": (None, "g_factor", float, _positive, 1.0),
}

CONFIG_KEYS = tuple(_KEYS)


def _literal(raw):
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low == "none":
        return None
    try:
        return float(raw) if not raw.lstrip("+-").isdigit() else int(raw)
    except ValueError:
        pass
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw  # bare word


def _coerce(key, value, line):
    section, attr, kind, check, scale = _KEYS[key]

    def fail(msg):
        raise ConfigError(msg, key, line)

    def number(v, integral=False):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            fail(f"expected a number, got {v!r}")
        if integral:
            if not float(v).is_integer():
                fail(f"expected an integer, got {v!r}")
            return int(v)
        return float(v)

    if kind in ("optional_float", "optional_list") and value is None:
        return None
    if kind is bool:
        if not isinstance(value, bool):
            fail(f"expected true/false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            fail(f"expected a string, got {value!r}")
        if not check(value):
            fail(f"value {value!r} out of range")
        return value
    if kind == "optional_list":
        items = value if isinstance(value, (list, tuple)) else (value,)
        items = tuple(number(v) for v in items)
        if not items or not all(check(v) for v in items):
            fail("expected a non-empty list of positive numbers")
        return items
    v = number(value, integral=kind is int)
    if not check(v):
        fail(f"value {v!r} out of range")
    return v / scale if scale not in (None, 1.0) else v


def parse_config(text):
    """Parse a dotted-key configuration document into an :class:`ExperimentConfig`.

    Lines are ``section.key = value``; ``#`` starts a comment. Values are
    numbers, ``true``/``false``, ``none``, quoted or bare strings, or
    bracketed lists.
    """
    seen = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError("unknown key", key, lineno)
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key][1]})", key, lineno)
        if not raw:
            raise ConfigError("missing value", key, lineno)
        seen[key] = (_coerce(key, _literal(raw), lineno), lineno)
    return build_config({k: v for k, (v, _) in seen.items()}, lines={k: n for k, (_, n) in seen.items()})


def build_config(values, lines=None):
    """Assemble a config from already-coerced ``{dotted_key: value}`` entries."""
    lines = lines or {}
    base = ExperimentConfig()
    sections = {}
    top = {}
    for key, value in values.items():
        section, attr = _KEYS[key][:2]
        if section is None:
            top[attr] = value
        else:
            sections.setdefault(section, {})[attr] = value
    for section, changes in sections.items():
        try:
            top[section] = replace(getattr(base, section), **changes)
        except InvalidArgumentError as exc:
            keys = [k for k in values if _KEYS[k][0] == section]
            last = max(keys, key=lambda k: lines.get(k, 0))
            raise ConfigError(str(exc), last, lines.get(last)) from exc
    try:
        return replace(base, **top)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    if isinstance(value, tuple):
        return "[" + ", ".join(_format(v) for v in value) + "]"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def config_to_text(config):
    """Render every key of `config` in the text format.

    Parsing the result reproduces `config` up to rounding of the microsecond keys.
    """
    out = []
    for key, (section, attr, _kind, _check, scale) in _KEYS.items():
        holder = config if section is None else getattr(config, section)
        value = getattr(holder, attr)
        if isinstance(value, float) and scale not in (None, 1.0):
            value = value * scale
        out.append(f"{key} = {_format(value)}")
    return "\n".join(out) + "\n"
