"""Scenario definition and configuration loading.

All internal quantities are SI (watts, meters, Hz, bits/s). Decibel units
appear only at the config-file boundary: in config files `los_pathloss_ref`
and `nlos_pathloss_ref` are dB power gains at 1 m, `p_max` is dBm,
`noise_psd` is dBm/Hz, and `rician_factors` is a dB pair. They are
converted to linear/SI when the file is loaded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .exposure import SarModel, default_sar_model, load_sar_model


# ---------------------------------------------------------------------------
# unit helpers
# ---------------------------------------------------------------------------

def db_to_linear(x):
    """dB power ratio -> linear power ratio."""
    return 10.0 ** (x / 10.0)


def linear_to_db(x):
    """Linear power ratio -> dB. Requires x > 0."""
    if x <= 0:
        raise ValueError("dB undefined for non-positive power ratio")
    return 10.0 * math.log10(x)


def dbm_to_watts(x):
    """dBm -> watts (0 dBm = 1 mW)."""
    return 10.0 ** ((x - 30.0) / 10.0)


def watts_to_dbm(x):
    """Watts -> dBm. Requires x > 0."""
    if x <= 0:
        raise ValueError("dBm undefined for non-positive power")
    return 10.0 * math.log10(x) + 30.0


def noise_power(psd_dbm_hz, bandwidth_hz):
    """Noise power in watts over `bandwidth_hz`, given a PSD in dBm/Hz."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return dbm_to_watts(psd_dbm_hz + 10.0 * math.log10(bandwidth_hz))


# ---------------------------------------------------------------------------
# parameter container
# ---------------------------------------------------------------------------

# Full-scale defaults (linear/SI already; the dB->linear conversion of the
# published values happens here, once).
_DEFAULTS = dict(
    num_users=8,
    num_subcarriers=80,
    num_ris_elements=80,
    rx_antennas=32,
    tx_antennas=2,
    bs_height=25.0,
    aris_height=100.0,
    slot_duration=15.0,
    flight_time=300.0,
    v_max=25.0,
    bandwidth_per_re=240e3,
    los_pathloss_ref=db_to_linear(-24.91),
    nlos_pathloss_ref=db_to_linear(-19.96),
    p_max=dbm_to_watts(26.0),
    noise_psd=dbm_to_watts(-174.0),  # watts/Hz
    carrier_freq=700e6,
    direct_pathloss_exp=3.908,
    rician_factors=(db_to_linear(3.0), db_to_linear(3.0)),
    ris_pathloss_exps=(2.2, 2.2),
    antenna_spacing_ratio=0.5,
)


@dataclass(frozen=True)
class SystemParams:
    """Static system parameters. All linear/SI units.

    num_slots must equal flight_time / slot_duration exactly; the maximum
    per-slot displacement v_max * slot_duration is derived, never stored.
    """

    num_users: int = _DEFAULTS["num_users"]
    num_subcarriers: int = _DEFAULTS["num_subcarriers"]
    num_ris_elements: int = _DEFAULTS["num_ris_elements"]
    rx_antennas: int = _DEFAULTS["rx_antennas"]
    tx_antennas: int = _DEFAULTS["tx_antennas"]
    bs_height: float = _DEFAULTS["bs_height"]
    aris_height: float = _DEFAULTS["aris_height"]
    slot_duration: float = _DEFAULTS["slot_duration"]
    flight_time: float = _DEFAULTS["flight_time"]
    num_slots: int = 0  # 0: derive from flight_time / slot_duration
    v_max: float = _DEFAULTS["v_max"]
    bandwidth_per_re: float = _DEFAULTS["bandwidth_per_re"]
    los_pathloss_ref: float = _DEFAULTS["los_pathloss_ref"]
    nlos_pathloss_ref: float = _DEFAULTS["nlos_pathloss_ref"]
    p_max: float = _DEFAULTS["p_max"]
    noise_psd: float = _DEFAULTS["noise_psd"]
    carrier_freq: float = _DEFAULTS["carrier_freq"]
    direct_pathloss_exp: float = _DEFAULTS["direct_pathloss_exp"]
    rician_factors: tuple = _DEFAULTS["rician_factors"]
    ris_pathloss_exps: tuple = _DEFAULTS["ris_pathloss_exps"]
    antenna_spacing_ratio: float = _DEFAULTS["antenna_spacing_ratio"]

    def __post_init__(self):
        if self.num_slots == 0:
            ratio = self.flight_time / self.slot_duration
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(
                    "invariant violated: slot_duration must divide flight_time "
                    f"(flight_time/slot_duration = {ratio})"
                )
            object.__setattr__(self, "num_slots", int(round(ratio)))
        if abs(self.num_slots * self.slot_duration - self.flight_time) > 1e-9 * self.flight_time:
            raise ValueError(
                "invariant violated: num_slots * slot_duration != flight_time "
                f"({self.num_slots} * {self.slot_duration} != {self.flight_time})"
            )
        for name in ("num_users", "num_subcarriers", "rx_antennas", "tx_antennas"):
            if getattr(self, name) < 1:
                raise ValueError(f"invariant violated: {name} must be >= 1")
        if self.num_ris_elements < 0:
            raise ValueError("invariant violated: num_ris_elements must be >= 0")
        if self.tx_antennas != 2:
            raise ValueError("invariant violated: tx_antennas is fixed at 2 "
                             "(the exposure polynomial is defined for 2 transmit antennas)")
        positive = ("bs_height", "aris_height", "slot_duration", "flight_time",
                    "v_max", "bandwidth_per_re", "los_pathloss_ref",
                    "nlos_pathloss_ref", "p_max", "noise_psd", "carrier_freq",
                    "antenna_spacing_ratio")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"invariant violated: {name} must be positive")
        object.__setattr__(self, "rician_factors", tuple(float(v) for v in self.rician_factors))
        object.__setattr__(self, "ris_pathloss_exps", tuple(float(v) for v in self.ris_pathloss_exps))
        if len(self.rician_factors) != 2 or len(self.ris_pathloss_exps) != 2:
            raise ValueError("rician_factors and ris_pathloss_exps must be pairs")

    @property
    def max_slot_distance(self):
        """Largest displacement the platform can cover within one slot."""
        return self.v_max * self.slot_duration

    @property
    def noise_per_re(self):
        """Per-resource-element noise power sigma^2 = PSD * w, watts."""
        return self.noise_psd * self.bandwidth_per_re


@dataclass(frozen=True)
class Scenario:
    """A fully-specified simulation instance.

    Positions are 3-vectors in meters: the base station at (0, 0, bs_height),
    users on the ground (z = 0), and the aerial platform start/end points at
    z = aris_height. `cell_radius` is both the user-sampling radius and the
    cell extent used for validation.
    """

    params: SystemParams
    bs_position: np.ndarray
    user_positions: np.ndarray          # (U, 3)
    rate_targets: np.ndarray            # (U,), bits/s
    aris_start: np.ndarray
    aris_end: np.ndarray
    sar_model: SarModel
    rng_seed: int
    cell_radius: float
    departure_uses_x: bool = False      # see channel module

    def __post_init__(self):
        p = self.params
        object.__setattr__(self, "bs_position", np.asarray(self.bs_position, dtype=float))
        object.__setattr__(self, "user_positions",
                           np.asarray(self.user_positions, dtype=float).reshape(p.num_users, 3))
        object.__setattr__(self, "rate_targets",
                           np.asarray(self.rate_targets, dtype=float).reshape(p.num_users))
        object.__setattr__(self, "aris_start", np.asarray(self.aris_start, dtype=float))
        object.__setattr__(self, "aris_end", np.asarray(self.aris_end, dtype=float))
        if np.any(self.rate_targets <= 0):
            raise ValueError("invariant violated: rate_targets must be strictly positive")
        radii = np.hypot(self.user_positions[:, 0], self.user_positions[:, 1])
        if np.any(radii > self.cell_radius * (1 + 1e-9)):
            raise ValueError("invariant violated: all users must lie inside the cell radius")
        if np.any(self.user_positions[:, 2] != 0.0):
            raise ValueError("invariant violated: users are on the ground (z = 0)")
        for name in ("aris_start", "aris_end"):
            q = getattr(self, name)
            if abs(q[2] - p.aris_height) > 1e-9:
                raise ValueError(f"invariant violated: {name} must be at altitude {p.aris_height}")

    # convenience views used throughout the optimizer
    @property
    def num_users(self):
        return self.params.num_users

    @property
    def num_slots(self):
        return self.params.num_slots


def sample_user_positions(rng, radius, num_users):
    """Uniform points over the disk of `radius` centered at the origin, z=0."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    r = radius * np.sqrt(rng.random(num_users))
    phi = 2.0 * np.pi * rng.random(num_users)
    pos = np.zeros((num_users, 3))
    pos[:, 0] = r * np.cos(phi)
    pos[:, 1] = r * np.sin(phi)
    return pos


# rng purpose tags; the per-(trial, slot, subcarrier, link) spawn keys live in
# the channel module, this one is scenario-level
_POSITIONS_STREAM = 0


def _position_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_POSITIONS_STREAM,)))


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

_DEFAULT_CELL_RADIUS = 100.0
_DEFAULT_SEED = 0
# per-user targets used in the reference experiments (bits/s)
_DEFAULT_RATES_8 = (10e6, 9.4e6, 8.5e6, 6.7e6, 4.5e6, 7.6e6, 8.7e6, 3.1e6)
_DEFAULT_RATE_OTHER = 6e6
_DEFAULT_ARIS_START = (-80.0, 55.0)
_DEFAULT_ARIS_END = (100.0, 20.0)

_INT_KEYS = {"num_users", "num_subcarriers", "num_ris_elements", "rx_antennas",
             "tx_antennas", "num_slots"}
_FLOAT_KEYS = {"bs_height", "aris_height", "slot_duration", "flight_time",
               "v_max", "bandwidth_per_re", "carrier_freq",
               "direct_pathloss_exp", "antenna_spacing_ratio"}
# keys whose config-file value is in dB/dBm and must be linearized
_DB_KEYS = {"los_pathloss_ref", "nlos_pathloss_ref"}
_DBM_KEYS = {"p_max"}
_PAIR_KEYS = {"rician_factors", "ris_pathloss_exps"}
_EXTRA_KEYS = {"users.radius", "rates", "aris.start", "aris.end", "seed",
               "sar.model", "channel.departure_uses_x", "noise_psd"}

_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _DB_KEYS | _DBM_KEYS | _PAIR_KEYS | _EXTRA_KEYS


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration files."""


def _parse_scalar(text, lineno):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: expected a number, got {text!r}") from None


def _parse_list(text, lineno):
    body = text.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    parts = [p for p in (s.strip() for s in body.split(",")) if p]
    return [_parse_scalar(p, lineno) for p in parts]


def parse_config_text(text):
    """Parse the flat `key = value` format into a {key: raw string} dict.

    Blank lines and `#` comments are ignored. Unknown keys and duplicate
    keys raise ConfigError with the offending line number.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        out[key] = (value, lineno)
    return out


def scenario_from_options(options):
    """Build a Scenario from already-typed option values (linear/SI units).

    `options` may contain SystemParams field names plus `users.radius`,
    `rates`, `aris.start`, `aris.end`, `seed`, `sar.model` (a SarModel or a
    path), and `channel.departure_uses_x`. Missing entries take the
    full-scale defaults.
    """
    opts = dict(options)
    radius = float(opts.pop("users.radius", _DEFAULT_CELL_RADIUS))
    seed = int(opts.pop("seed", _DEFAULT_SEED))
    rates = opts.pop("rates", None)
    start_xy = opts.pop("aris.start", _DEFAULT_ARIS_START)
    end_xy = opts.pop("aris.end", _DEFAULT_ARIS_END)
    sar = opts.pop("sar.model", None)
    dep_x = bool(opts.pop("channel.departure_uses_x", False))

    params = SystemParams(**opts)

    if rates is None:
        if params.num_users == 8:
            rates = _DEFAULT_RATES_8
        else:
            rates = (_DEFAULT_RATE_OTHER,) * params.num_users
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (params.num_users,):
        raise ConfigError(
            f"rates must list exactly num_users={params.num_users} values, got {rates.size}")

    if sar is None:
        sar = default_sar_model()
    elif isinstance(sar, str):
        sar = load_sar_model(sar)

    def _lift(q, name):
        q = tuple(float(v) for v in np.atleast_1d(q).ravel())
        if len(q) == 2:
            return np.array([q[0], q[1], params.aris_height])
        if len(q) == 3:
            return np.array(q)
        raise ConfigError(f"{name} must have 2 or 3 coordinates")

    users = sample_user_positions(_position_rng(seed), radius, params.num_users)
    return Scenario(
        params=params,
        bs_position=np.array([0.0, 0.0, params.bs_height]),
        user_positions=users,
        rate_targets=rates,
        aris_start=_lift(start_xy, "aris.start"),
        aris_end=_lift(end_xy, "aris.end"),
        sar_model=sar,
        rng_seed=seed,
        cell_radius=radius,
        departure_uses_x=dep_x,
    )


def load_scenario_text(text, overrides=None):
    """Parse config text (see `load_scenario`) into a validated Scenario.

    `overrides` is an optional mapping of already-typed option values
    (e.g. {"seed": 3}) applied on top of whatever the text sets.
    """
    raw = parse_config_text(text)
    options = {}
    for key, (value, lineno) in raw.items():
        try:
            if key in _INT_KEYS:
                v = _parse_scalar(value, lineno)
                if abs(v - round(v)) > 1e-12:
                    raise ConfigError(f"line {lineno}: {key} must be an integer")
                options[key] = int(round(v))
            elif key in _FLOAT_KEYS:
                options[key] = _parse_scalar(value, lineno)
            elif key in _DB_KEYS:
                options[key] = db_to_linear(_parse_scalar(value, lineno))
            elif key in _DBM_KEYS:
                options[key] = dbm_to_watts(_parse_scalar(value, lineno))
            elif key == "noise_psd":  # dBm/Hz at the boundary
                options[key] = dbm_to_watts(_parse_scalar(value, lineno))
            elif key in _PAIR_KEYS:
                pair = _parse_list(value, lineno)
                if len(pair) != 2:
                    raise ConfigError(f"line {lineno}: {key} needs exactly 2 values")
                if key == "rician_factors":  # dB at the boundary
                    pair = [db_to_linear(v) for v in pair]
                options[key] = tuple(pair)
            elif key == "rates":
                options[key] = _parse_list(value, lineno)
            elif key in ("aris.start", "aris.end"):
                options[key] = tuple(_parse_list(value, lineno))
            elif key == "users.radius":
                options[key] = _parse_scalar(value, lineno)
            elif key == "seed":
                options[key] = int(_parse_scalar(value, lineno))
            elif key == "sar.model":
                options[key] = value
            elif key == "channel.departure_uses_x":
                low = value.lower()
                if low not in ("true", "false", "0", "1"):
                    raise ConfigError(f"line {lineno}: {key} must be true/false")
                options[key] = low in ("true", "1")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    if overrides:
        options.update(overrides)
    try:
        return scenario_from_options(options)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_scenario(path, overrides=None):
    """Load and validate a Scenario from a config file."""
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario_text(fh.read(), overrides)


def _db_preimage(x, from_db, to_db):
    """A dB value t with from_db(t) == x bit-exactly, when one exists.

    to_db(from_db(t)) can be off by an ulp, which would break the
    write -> load -> equal round trip; walk a few ulps to land exactly.
    """
    t = to_db(x)
    for _ in range(64):
        got = from_db(t)
        if got == x:
            return t
        t = math.nextafter(t, math.inf if got < x else -math.inf)
    return to_db(x)  # best effort for values outside from_db's image


def save_scenario(scenario, path):
    """Write a config file that `load_scenario` reads back to an equal Scenario.

    Positions are regenerated from the stored seed on load, so only the seed
    and sampling radius are persisted.
    """
    p = scenario.params

    def db(x):
        return _db_preimage(x, db_to_linear, linear_to_db)

    def dbm(x):
        return _db_preimage(x, dbm_to_watts, watts_to_dbm)
    lines = [
        f"num_users = {p.num_users}",
        f"num_subcarriers = {p.num_subcarriers}",
        f"num_ris_elements = {p.num_ris_elements}",
        f"rx_antennas = {p.rx_antennas}",
        f"tx_antennas = {p.tx_antennas}",
        f"bs_height = {p.bs_height!r}",
        f"aris_height = {p.aris_height!r}",
        f"slot_duration = {p.slot_duration!r}",
        f"flight_time = {p.flight_time!r}",
        f"v_max = {p.v_max!r}",
        f"bandwidth_per_re = {p.bandwidth_per_re!r}",
        f"los_pathloss_ref = {db(p.los_pathloss_ref)!r}",
        f"nlos_pathloss_ref = {db(p.nlos_pathloss_ref)!r}",
        f"p_max = {dbm(p.p_max)!r}",
        f"noise_psd = {dbm(p.noise_psd)!r}",
        f"carrier_freq = {p.carrier_freq!r}",
        f"direct_pathloss_exp = {p.direct_pathloss_exp!r}",
        f"rician_factors = {db(p.rician_factors[0])!r}, {db(p.rician_factors[1])!r}",
        f"ris_pathloss_exps = {p.ris_pathloss_exps[0]!r}, {p.ris_pathloss_exps[1]!r}",
        f"antenna_spacing_ratio = {p.antenna_spacing_ratio!r}",
        f"users.radius = {scenario.cell_radius!r}",
        "rates = [" + ", ".join(repr(float(r)) for r in scenario.rate_targets) + "]",
        "aris.start = " + ", ".join(repr(float(v)) for v in scenario.aris_start),
        "aris.end = " + ", ".join(repr(float(v)) for v in scenario.aris_end),
        f"seed = {scenario.rng_seed}",
        f"channel.departure_uses_x = {str(scenario.departure_uses_x).lower()}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def desk_scenario(seed=7, **overrides):
    """Small, fast scenario used by the test harness and quick experiments.

    Four users on a 100 m disk, 8 resource elements, a 16-element surface,
    8 receive antennas, and a 6-slot flight whose start and end coincide at
    a corner of the cell (a charging-station layout).
    """
    opts = dict(
        num_users=4,
        num_subcarriers=8,
        num_ris_elements=16,
        rx_antennas=8,
        slot_duration=15.0,
        flight_time=90.0,
        rates=(8e6, 6.5e6, 7.5e6, 5e6),
        seed=seed,
    )
    opts["users.radius"] = 100.0
    opts["aris.start"] = (-90.0, 90.0)
    opts["aris.end"] = (-90.0, 90.0)
    opts.update(overrides)
    return scenario_from_options(opts)


def scenario_with(scenario, **param_overrides):
    """Scenario copy with some SystemParams fields replaced.

    User positions, rates, endpoints, and the seed are preserved; the
    derived slot count is recomputed when timing fields change.
    """
    if ("slot_duration" in param_overrides or "flight_time" in param_overrides) \
            and "num_slots" not in param_overrides:
        param_overrides["num_slots"] = 0
    newp = replace(scenario.params, **param_overrides)
    return replace(scenario, params=newp)
