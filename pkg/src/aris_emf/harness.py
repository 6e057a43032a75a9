"""Monte Carlo experiment driver: parameter sweeps over paired trials,
empirical CDFs, flight-path reports, and deterministic table export.

All schemes at a sweep point see identical channel draws for a given trial
index (stream derivation depends only on seed/trial/slot/subcarrier/link),
so scheme orderings are free of channel noise.  Everything downstream of a
fixed (seed, spec) pair is deterministic, including output bytes.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .exposure import InfeasibleError
from .orchestrator import (
    AoKnobs,
    baseline_fixed_ris,
    baseline_no_ris,
    baseline_unoptimized_phases,
    fixed_position_search,
    march_path,
    run_ao,
)
from .scenario import scenario_with
from .trajectory import straight_trajectory

SWEEPABLE = ("rx_antennas", "num_ris_elements", "noise_psd")
SCHEMES = ("proposed", "fixed", "random", "zero", "no-ris")

# Monte Carlo default budgets: one linearized path move, loose outer stop.
MC_KNOBS = AoKnobs(traj_outers=1)
MC_EPS = 1e-2


@dataclass(frozen=True)
class SweepSpec:
    """One parameter sweep: which knob, which values, how many paired trials,
    which schemes, on which base scenario."""

    parameter: str
    values: tuple
    trials: int
    schemes: tuple
    scenario: object

    def __post_init__(self):
        if self.parameter not in SWEEPABLE:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}; "
                             f"choose one of {SWEEPABLE}")
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("sweep needs at least one value")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        object.__setattr__(self, "values", values)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        schemes = tuple(self.schemes)
        unknown = [s for s in schemes if s not in SCHEMES]
        if not schemes or unknown:
            raise ValueError(f"schemes must be a non-empty subset of {SCHEMES},"
                             f" got {schemes}")
        object.__setattr__(self, "schemes", schemes)


@dataclass(frozen=True)
class Table:
    """Column-named rows, ready for deterministic export."""

    columns: tuple
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError("row width does not match column count")

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_table(table, fmt, path):
    """Write a Table as `csv` (header row) or `dat` (two bare "x y" columns).

    Float cells use shortest round-trip formatting, so a fixed table yields
    byte-identical files across runs.
    """
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_cell(v) for v in row])
        text = buf.getvalue()
    elif fmt == "dat":
        if len(table.columns) != 2:
            raise ValueError("dat export needs exactly two columns (x, y); "
                             f"got {len(table.columns)}")
        text = "".join(f"{_cell(a)} {_cell(b)}\n" for a, b in table.rows)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _run_scheme(scheme, scenario, trial, eps, knobs, channel_set=None):
    if scheme == "proposed":
        _, report = run_ao(scenario, trial=trial, eps=eps, knobs=knobs,
                           channel_set=channel_set)
        return report
    if scheme == "fixed":
        return baseline_fixed_ris(scenario, trial=trial, eps=eps, knobs=knobs)
    if scheme == "random":
        return baseline_unoptimized_phases(scenario, "random", trial=trial,
                                           eps=eps, knobs=knobs)
    if scheme == "zero":
        return baseline_unoptimized_phases(scenario, "zero", trial=trial,
                                           eps=eps, knobs=knobs)
    if scheme == "no-ris":
        return baseline_no_ris(scenario, trial=trial, eps=eps, knobs=knobs)
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass
class SweepResult:
    """Aggregated sweep output plus the raw per-trial samples."""

    table: Table
    # (value, scheme) -> list of per-trial exposure indices (successes only)
    samples: dict = field(default_factory=dict)
    # (value, scheme) -> list of per-trial max per-user exposure
    max_samples: dict = field(default_factory=dict)
    # (value, scheme) -> {trial: exposure index}, for paired comparisons
    by_trial: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)


def monte_carlo_sweep(spec, eps=MC_EPS, knobs=MC_KNOBS, progress=None):
    """Run every (value, scheme, trial) cell of the sweep.

    Returns a SweepResult whose table has one row per (value, scheme) with
    mean exposure index, standard error, successful-trial count, failure
    count, and a flag set when more than 10% of trials failed.  Paired
    design: a trial index reuses the same channel draws across schemes and
    the per-point ChannelSet is built once and shared where possible.
    """
    rows = []
    result = SweepResult(table=None)
    for value in spec.values:
        if spec.parameter in ("rx_antennas", "num_ris_elements"):
            point_value = int(round(value))
        else:
            point_value = value
        scn = scenario_with(spec.scenario, **{spec.parameter: point_value})
        for trial in range(spec.trials):
            shared = ChannelSet(scn, trial)
            for scheme in spec.schemes:
                key = (point_value, scheme)
                result.samples.setdefault(key, [])
                result.max_samples.setdefault(key, [])
                result.by_trial.setdefault(key, {})
                result.failures.setdefault(key, [])
                try:
                    cs = shared if scheme == "proposed" else None
                    report = _run_scheme(scheme, scn, trial, eps, knobs,
                                         channel_set=cs)
                except InfeasibleError as exc:
                    result.failures[key].append((trial, str(exc)))
                    continue
                result.samples[key].append(report.exposure_index)
                result.by_trial[key][trial] = report.exposure_index
                per_user = report.per_user_index(scn.params.slot_duration)
                result.max_samples[key].append(float(per_user.max()))
                if progress is not None:
                    progress(point_value, scheme, trial,
                             report.exposure_index)
    for value in spec.values:
        if spec.parameter in ("rx_antennas", "num_ris_elements"):
            point_value = int(round(value))
        else:
            point_value = value
        for scheme in sorted(spec.schemes):
            key = (point_value, scheme)
            vals = result.samples[key]
            fails = len(result.failures[key])
            if vals:
                mean = float(np.mean(vals))
                stderr = (float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
                          if len(vals) > 1 else 0.0)
            else:
                mean, stderr = float("nan"), float("nan")
            rows.append((spec.parameter, point_value, scheme, mean, stderr,
                         len(vals), fails, int(fails > 0.1 * spec.trials)))
    result.table = Table(
        ("parameter", "value", "scheme", "mean_exposure", "stderr",
         "trials", "failures", "flagged"), rows)
    return result


def xy_table(result, scheme):
    """Two-column (value, mean exposure) view of one scheme's sweep curve."""
    rows = [(r[1], r[3]) for r in result.table.rows if r[2] == scheme]
    if not rows:
        raise ValueError(f"scheme {scheme!r} not present in the sweep table")
    return Table(("value", "mean_exposure"), rows)


def exposure_cdf(samples):
    """Empirical CDF of the given exposures as sorted (value, k/n) pairs."""
    vals = [float(v) for v in samples]
    if not vals:
        raise ValueError("cannot build a CDF from zero samples")
    vals.sort()
    n = len(vals)
    return [(v, (k + 1) / n) for k, v in enumerate(vals)]


def cdf_table(samples):
    return Table(("exposure", "cdf"), exposure_cdf(samples))


def trajectory_report(scenario, trial=0, eps=MC_EPS, knobs=MC_KNOBS,
                      resolution=1.0):
    """Flight paths flown by the three path policies, as one long table.

    Columns: scheme, slot, x, y, z.  `optimized` re-plans the path inside
    the alternating loop, `direct` flies the straight start-to-end line,
    and `fixed` marches to the recursively chosen hover point.
    """
    p = scenario.params
    state, _ = run_ao(scenario, trial=trial, eps=eps, knobs=knobs)
    direct = straight_trajectory(scenario.aris_start, scenario.aris_end,
                                 p.num_slots).points
    hover_xy = fixed_position_search(scenario, trial=trial,
                                     resolution=resolution)
    hover = np.array([hover_xy[0], hover_xy[1], p.aris_height])
    fixed = march_path(scenario.aris_start, hover, p.max_slot_distance,
                       p.num_slots)
    rows = []
    for name, path in (("optimized", state.trajectory), ("direct", direct),
                       ("fixed", fixed)):
        for ell, q in enumerate(path):
            rows.append((name, ell, float(q[0]), float(q[1]), float(q[2])))
    return Table(("scheme", "slot", "x", "y", "z"), rows)
