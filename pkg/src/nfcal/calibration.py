"""
Per-sub-array phase/gain extraction from a back-propagated aperture field,
adjacent-sub-array outlier pruning, and bore-sight / steered calibration
tables.

Phase values are degrees. A calibration phase ``c_k`` is what the phase
shifter of sub-array ``k`` should add; registers hold ``c_k`` quantized to
6 bits and the gain correction quantized to 5 bits.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .forward_model import (GAIN_BITS, PHASE_BITS, PHASE_STEP_DEG, DEFAULT_GAIN_STEP_DB,
                            ChainState, DirectionGrid, FieldGrid, simulate_far_field,
                            subarray_reference_pattern)
from .geometry import ApertureLayout
from .transforms import far_field_from_scan

DEFAULT_THRESHOLD_DEG = 30.0
DEFAULT_GUARD = 0.25
DEFAULT_STEERING_RANGE_DEG = 15.0


class EmptySubArray(ValueError):
    pass


class DirectionOutOfRange(UserWarning):
    pass


def wrap180(deg):
    """Wrap to [-180, 180)."""
    return np.mod(np.asarray(deg, dtype=float) + 180.0, 360.0) - 180.0


def wrap360(deg):
    return np.mod(np.asarray(deg, dtype=float), 360.0)


def circular_distance(p_i, p_j):
    """Shortest separation on the 360 degree circle, in [0, 180]."""
    m = np.mod(np.asarray(p_i, dtype=float) - np.asarray(p_j, dtype=float) + 360.0, 360.0)
    return np.minimum(m, 360.0 - m)


@dataclass
class SubArraySamples:
    subarray_id: int
    values: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def phases_deg(self) -> np.ndarray:
        return wrap360(np.degrees(np.angle(self.values)))

    @property
    def amplitude_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.values))

    def __len__(self):
        return len(self.values)

    def subset(self, keep) -> "SubArraySamples":
        return SubArraySamples(self.subarray_id, self.values[keep], self.x[keep], self.y[keep])


def extract_subarray_samples(field: FieldGrid, layout: ApertureLayout, center=(0.0, 0.0),
                             guard=DEFAULT_GUARD, min_points=3) -> list[SubArraySamples]:
    """Grid points inside each sub-array footprint, shrunk by ``guard * pitch``
    per edge and shifted to the located aperture center."""
    xx, yy = field.mesh()
    shrink = guard * layout.element_pitch
    out = []
    for sa in layout.subarrays:
        x_lo, x_hi, y_lo, y_hi = layout.footprint(sa.id)
        inside = ((xx >= center[0] + x_lo + shrink) & (xx <= center[0] + x_hi - shrink)
                  & (yy >= center[1] + y_lo + shrink) & (yy <= center[1] + y_hi - shrink))
        n = int(inside.sum())
        if n < min_points:
            raise EmptySubArray(
                f"sub-array {sa.id}: only {n} grid points inside its footprint; refine the grid")
        out.append(SubArraySamples(sa.id, field.samples[inside], xx[inside], yy[inside]))
    return out


def prune_outliers(samples: SubArraySamples, threshold=DEFAULT_THRESHOLD_DEG) -> SubArraySamples:
    """Iteratively drop the worse end of the widest phase pair.

    Each round finds the pair with the largest circular distance, then
    removes whichever of the two has the larger summed distance to all
    other remaining points (ties remove the later index). Stops once every
    pairwise distance is within ``threshold``.
    """
    if len(samples) < 1:
        raise ValueError("no samples to prune")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    keep = kernels.prune(samples.phases_deg, threshold)
    return samples.subset(keep)


def boresight_phase(samples: SubArraySamples) -> float:
    """Circular mean: unwrap every point to within 180 deg of the first, average, re-wrap."""
    p = samples.phases_deg
    if p.size == 0:
        raise ValueError("no samples")
    rel = wrap180(p - p[0])
    return float(wrap360(p[0] + rel.mean()))


def mean_amplitude_db(samples: SubArraySamples) -> float:
    return float(np.mean(samples.amplitude_db))


def quantize_phase(phase_deg):
    return np.mod(np.round(wrap360(phase_deg) / PHASE_STEP_DEG), 2 ** PHASE_BITS).astype(int)


def quantize_gain(gain_db, step_db=DEFAULT_GAIN_STEP_DB):
    return np.clip(np.round(np.asarray(gain_db) / step_db), 0, 2 ** GAIN_BITS - 1).astype(int)


@dataclass
class CalibrationTable:
    alpha: float
    beta: float
    subarray_ids: np.ndarray
    cal_phase_deg: np.ndarray
    cal_gain_db: np.ndarray
    gain_step_db: float = DEFAULT_GAIN_STEP_DB
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.subarray_ids = np.asarray(self.subarray_ids, dtype=int)
        self.cal_phase_deg = wrap360(self.cal_phase_deg)
        self.cal_gain_db = np.asarray(self.cal_gain_db, dtype=float)

    @property
    def phase_reg(self) -> np.ndarray:
        return quantize_phase(self.cal_phase_deg)

    @property
    def gain_reg(self) -> np.ndarray:
        return quantize_gain(self.cal_gain_db, self.gain_step_db)

    @property
    def phase_quantization_error(self) -> np.ndarray:
        return wrap180(self.phase_reg * PHASE_STEP_DEG - self.cal_phase_deg)

    @property
    def gain_quantization_error(self) -> np.ndarray:
        return self.gain_reg * self.gain_step_db - self.cal_gain_db

    def to_chains(self) -> list[ChainState]:
        return [ChainState(int(i), int(p), int(g), self.gain_step_db)
                for i, p, g in zip(self.subarray_ids, self.phase_reg, self.gain_reg)]

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subarray_id", "alpha_deg", "beta_deg", "cal_phase_deg", "phase_reg",
                    "cal_gain_db", "gain_reg"])
        for i, ph, pr, g, gr in zip(self.subarray_ids, self.cal_phase_deg, self.phase_reg,
                                    self.cal_gain_db, self.gain_reg):
            w.writerow([int(i), repr(float(self.alpha)), repr(float(self.beta)), repr(float(ph)),
                        int(pr), repr(float(g)), int(gr)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, gain_step_db=DEFAULT_GAIN_STEP_DB) -> "CalibrationTable":
        rows = list(csv.DictReader(line for line in text.splitlines() if not line.startswith("#")))
        if not rows:
            raise ValueError("empty calibration table")
        return cls(float(rows[0]["alpha_deg"]), float(rows[0]["beta_deg"]),
                   [int(r["subarray_id"]) for r in rows],
                   [float(r["cal_phase_deg"]) for r in rows],
                   [float(r["cal_gain_db"]) for r in rows], gain_step_db)


def registers_text(chains) -> str:
    """Flat register file: one ``subarray_id phase_reg gain_reg`` line per chain."""
    lines = ["# subarray_id phase_reg gain_reg"]
    lines += [f"{c.subarray_id} {c.phase_reg} {c.gain_reg}" for c in chains]
    return "\n".join(lines) + "\n"


def parse_registers(text: str, gain_step_db=DEFAULT_GAIN_STEP_DB) -> list[ChainState]:
    chains = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sid, pr, gr = (int(v) for v in line.split())
        chains.append(ChainState(sid, pr, gr, gain_step_db))
    return chains


def equalizing_gains(amp_db) -> np.ndarray:
    """Raise every chain to the strongest one: ``max(a) - a_k``."""
    amp_db = np.asarray(amp_db, dtype=float)
    return amp_db.max() - amp_db


def boresight_calibrate(field: FieldGrid, layout: ApertureLayout, center=(0.0, 0.0),
                        guard=DEFAULT_GUARD, threshold=DEFAULT_THRESHOLD_DEG,
                        gain_step_db=DEFAULT_GAIN_STEP_DB) -> CalibrationTable:
    """Bore-sight table from a reconstructed aperture field.

    ``cal_k = -p_k`` with ``p_k`` the circular mean of the pruned samples;
    the gain path averages the amplitude (dB) of the same retained points.
    """
    samples = extract_subarray_samples(field, layout, center, guard)
    phases, amps, counts = [], [], []
    for s in samples:
        kept = prune_outliers(s, threshold)
        phases.append(boresight_phase(kept))
        amps.append(mean_amplitude_db(kept))
        counts.append((len(s), len(kept)))
    phases = np.array(phases)
    amps = np.array(amps)
    return CalibrationTable(0.0, 0.0, [s.subarray_id for s in samples], -phases,
                            equalizing_gains(amps), gain_step_db,
                            meta={"measured_phase_deg": phases, "measured_amp_db": amps,
                                  "sample_counts": counts})


def reference_phases(layout: ApertureLayout, directions: DirectionGrid) -> np.ndarray:
    """Ideal per-sub-array pattern phase (degrees), shape ``(n_sub, *directions.shape)``."""
    from .forward_model import subarray_reference_patterns

    return np.degrees(np.angle(subarray_reference_patterns(layout, directions)))


def nonboresight_calibrate(bore: CalibrationTable, layout: ApertureLayout, reference_patterns,
                           direction, C=0.0, steering_range=DEFAULT_STEERING_RANGE_DEG) -> CalibrationTable:
    """Steered table from the bore-sight table and ideal sub-array patterns.

    The measured phase of sub-array ``k`` towards ``d`` follows its ideal
    pattern up to the hardware offset, so
    ``p_k(d) = p_k(0) + [ref_k(d) - ref_k(0)] + C`` and ``cal_k(d) = -p_k(d)``.

    ``reference_patterns`` maps sub-array id to a :class:`FarFieldPattern`
    sampled at (at least) ``direction`` and ``(0, 0)``; ``None`` builds
    them from ``layout``. Gains keep the bore-sight hardware equalization.
    """
    alpha, beta = (float(v) for v in direction)
    if max(abs(alpha), abs(beta)) > steering_range + 1e-12:
        warnings.warn(f"direction ({alpha}, {beta}) outside the +/-{steering_range} deg steering range",
                      DirectionOutOfRange, stacklevel=2)
    if reference_patterns is None:
        reference_patterns = reference_pattern_set(layout, [(alpha, beta)])
    p0 = -bore.cal_phase_deg
    delta = np.array([_pattern_phase(reference_patterns[int(sid)], alpha, beta)
                      - _pattern_phase(reference_patterns[int(sid)], 0.0, 0.0)
                      for sid in bore.subarray_ids])
    p = p0 + delta + C
    return CalibrationTable(alpha, beta, bore.subarray_ids, -p, bore.cal_gain_db.copy(),
                            bore.gain_step_db, meta={"reference_delta_deg": delta, "C": C})


def reference_pattern_set(layout: ApertureLayout, directions) -> dict:
    """Ideal sub-array patterns at the given directions plus bore-sight."""
    pts = [(0.0, 0.0)] + [tuple(map(float, d)) for d in directions]
    grid = DirectionGrid.points(pts)
    return {sa.id: subarray_reference_pattern(layout, sa.id, grid) for sa in layout.subarrays}


def _pattern_phase(pattern, alpha, beta) -> float:
    d = pattern.directions
    hit = np.flatnonzero((np.abs(d.alpha.ravel() - alpha) < 1e-9) & (np.abs(d.beta.ravel() - beta) < 1e-9))
    if hit.size == 0:
        raise KeyError(f"reference pattern lacks direction ({alpha}, {beta})")
    return float(np.degrees(np.angle(pattern.values.ravel()[hit[0]])))


def consistency_check(layout: ApertureLayout, k, l, field_k: FieldGrid, field_l: FieldGrid,
                      directions: DirectionGrid, delta_z, amplitude_floor=0.01) -> np.ndarray:
    """Residual (degrees, wrapped to +/-180) of the per-sub-array phase identity.

    For each sub-array ``s`` the measured phase change from bore-sight minus
    the ideal-pattern phase change should be the same for ``k`` and ``l``.
    Directions where either ideal pattern falls below ``amplitude_floor``
    times its own peak magnitude sit on a pattern null, where phase is
    undefined; they come back as NaN. ``amplitude_floor=None`` keeps them.
    """
    zero = DirectionGrid.points([(0.0, 0.0)])
    valid = np.ones(directions.shape, dtype=bool)

    def excess(sid, scan):
        meas = np.angle(far_field_from_scan(scan, directions, delta_z).values)
        meas0 = np.angle(far_field_from_scan(scan, zero, delta_z).values)[0]
        ref_c = simulate_far_field(layout, directions=directions, only=[sid]).values
        ref = np.angle(ref_c)
        ref0 = np.angle(simulate_far_field(layout, directions=zero, only=[sid]).values)[0]
        if amplitude_floor is not None:
            mag = np.abs(ref_c)
            valid[...] &= mag >= amplitude_floor * np.nanmax(mag)
        return np.degrees((meas - meas0) - (ref - ref0))

    res = wrap180(excess(k, field_k) - excess(l, field_l))
    return np.where(valid, res, np.nan)


def naive_calibrate(layout: ApertureLayout, subarray_scans: dict, direction, delta_z,
                    gain_step_db=DEFAULT_GAIN_STEP_DB) -> CalibrationTable:
    """Per-sub-array baseline: one scan per sub-array, phases read straight off
    each sub-array's measured far field towards ``direction``."""
    alpha, beta = (float(v) for v in direction)
    grid = DirectionGrid.points([(alpha, beta), (0.0, 0.0)])
    ids = [sa.id for sa in layout.subarrays]
    missing = [i for i in ids if i not in subarray_scans]
    if missing:
        raise KeyError(f"missing per-sub-array scans for {missing}")
    phases, amps = [], []
    for sid in ids:
        meas = far_field_from_scan(subarray_scans[sid], grid, delta_z).values
        ref = simulate_far_field(layout, directions=grid, only=[sid]).values
        phases.append(np.degrees(np.angle(meas[0])))
        amps.append(20.0 * np.log10(abs(meas[1]) / abs(ref[1])))
    return CalibrationTable(alpha, beta, ids, -np.array(phases), equalizing_gains(amps), gain_step_db,
                            meta={"scans_used": len(ids)})
