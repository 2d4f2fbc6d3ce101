"""
Beam-forming quality metrics on regular (alpha, beta) pattern grids.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .forward_model import DirectionGrid, FarFieldPattern, simulate_far_field
from .geometry import SPEED_OF_LIGHT


class MainLobeUnresolved(RuntimeError):
    pass


@dataclass
class PatternMetrics:
    peak_alpha: float
    peak_beta: float
    peak_db: float
    main_alpha: float
    main_beta: float
    sll_db: float
    hpbw_az: float
    hpbw_el: float
    directivity_dbi: float
    efficiency: float
    mainlobe: str

    def as_dict(self):
        return asdict(self)


def _db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def _require_regular(p: FarFieldPattern):
    if not p.directions.is_regular():
        raise ValueError("metrics need a pattern on a regular (alpha, beta) grid")
    return p.directions.alpha_axis, p.directions.beta_axis


def _hill_climb(power, i, j):
    nx, ny = power.shape
    while True:
        best = (power[i, j], i, j)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                a, b = i + di, j + dj
                if 0 <= a < nx and 0 <= b < ny and power[a, b] > best[0]:
                    best = (power[a, b], a, b)
        if best[1] == i and best[2] == j:
            return i, j
        i, j = best[1], best[2]


def _half_power_width(axis, cut, idx):
    """Width between the -3 dB crossings either side of ``idx`` (NaN if not bracketed)."""
    half = cut[idx] / 2.0
    lo = idx
    while lo > 0 and cut[lo] > half:
        lo -= 1
    hi = idx
    while hi < cut.size - 1 and cut[hi] > half:
        hi += 1
    if cut[lo] > half or cut[hi] > half:
        return float("nan")

    def cross(a, b):
        if cut[a] == cut[b]:
            return axis[a]
        t = (half - cut[a]) / (cut[b] - cut[a])
        return axis[a] + t * (axis[b] - axis[a])

    return float(cross(hi - 1, hi) - cross(lo + 1, lo))


def _null_radii(interp, center, n_rays, r_max, dr):
    """First local minimum of the power along rays from ``center``; NaN where none."""
    radii = np.full(n_rays, np.nan)
    angles = 2 * np.pi * np.arange(n_rays) / n_rays
    r = np.arange(0.0, r_max + dr, dr)
    for q, psi in enumerate(angles):
        pts = np.column_stack([center[0] + r * np.cos(psi), center[1] + r * np.sin(psi)])
        vals = interp(pts)
        ok = np.isfinite(vals)
        vals = vals[ok]
        for s in range(1, vals.size - 1):
            if vals[s] <= vals[s - 1] and vals[s] < vals[s + 1]:
                radii[q] = r[ok][s]
                break
    return angles, radii


def normalized_peak_db(p: FarFieldPattern, weights) -> float:
    """Peak power over total excitation power ``sum |w|^2`` (dB).

    Removes the arbitrary absolute level set by gain registers, so arrays
    driven at different overall gain compare on radiated-pattern shape.
    """
    return float(_db(p.power.max() / np.sum(np.abs(weights) ** 2)))


def solid_angle_weights(alpha_axis, beta_axis):
    """Trapezoid weights for ``dOmega = cos(beta) d(alpha) d(beta)`` (steradians)."""
    wa = np.gradient(np.radians(alpha_axis)) if alpha_axis.size > 1 else np.ones(1)
    wb = np.gradient(np.radians(beta_axis)) if beta_axis.size > 1 else np.ones(1)
    wa = wa.copy()
    wb = wb.copy()
    wa[[0, -1]] *= 0.5
    wb[[0, -1]] *= 0.5
    return np.outer(wa, wb * np.cos(np.radians(beta_axis)))


def pattern_metrics(p: FarFieldPattern, main=None, mainlobe_exclusion="auto",
                    aperture_area=None, n_rays=72) -> PatternMetrics:
    """Peak, side-lobe level, beamwidths and directivity of a pattern.

    The main lobe is the local maximum reached by hill-climbing from
    ``main`` (the global peak if ``main`` is None). Its boundary is the
    first null along rays from that maximum; if any ray finds no null the
    region falls back to a disc of radius ``mainlobe_exclusion`` degrees
    (``"auto"`` = twice the larger half-power beamwidth). With
    ``mainlobe_exclusion=None`` an unresolved boundary raises
    :class:`MainLobeUnresolved`. SLL is the strongest point outside the
    main lobe relative to the main-lobe peak; it can exceed 0 dBc when
    another lobe outgrows the commanded one.
    """
    a_ax, b_ax = _require_regular(p)
    power = p.power
    gi, gj = np.unravel_index(np.argmax(power), power.shape)
    if main is None:
        mi, mj = gi, gj
    else:
        i0 = int(np.argmin(np.abs(a_ax - main[0])))
        j0 = int(np.argmin(np.abs(b_ax - main[1])))
        mi, mj = _hill_climb(power, i0, j0)
    p_main = power[mi, mj]
    if p_main <= 0:
        raise MainLobeUnresolved("pattern is identically zero")

    hpbw_az = _half_power_width(a_ax, power[:, mj], mi)
    hpbw_el = _half_power_width(b_ax, power[mi, :], mj)

    center = (a_ax[mi], b_ax[mj])
    step = min(np.diff(a_ax).min(), np.diff(b_ax).min())
    interp = RegularGridInterpolator((a_ax, b_ax), power, bounds_error=False, fill_value=np.nan)
    r_max = float(np.hypot(a_ax[-1] - a_ax[0], b_ax[-1] - b_ax[0]))
    angles, radii = _null_radii(interp, center, n_rays, r_max, step / 2.0)

    da = p.directions.alpha - center[0]
    db = p.directions.beta - center[1]
    rad = np.hypot(da, db)
    if np.all(np.isfinite(radii)):
        psi = np.mod(np.arctan2(db, da), 2 * np.pi)
        ray = np.rint(psi / (2 * np.pi / n_rays)).astype(int) % n_rays
        inside = rad < radii[ray]
        method = "first-null"
    else:
        if mainlobe_exclusion is None:
            raise MainLobeUnresolved("no null found around the main lobe and no exclusion radius given")
        if mainlobe_exclusion == "auto":
            widths = [w for w in (hpbw_az, hpbw_el) if np.isfinite(w)]
            if not widths:
                raise MainLobeUnresolved("main lobe has no half-power boundary inside the grid")
            mainlobe_exclusion = 2.0 * max(widths)
        inside = rad <= float(mainlobe_exclusion)
        method = f"exclusion {float(mainlobe_exclusion):.3g} deg"
    outside = power[~inside]
    sll = float(_db(outside.max() / p_main)) if outside.size else float("-inf")

    w = solid_angle_weights(a_ax, b_ax)
    total = float(np.sum(power * w))
    directivity = 4 * np.pi * power[gi, gj] / total
    eff = float("nan")
    if aperture_area is not None:
        wavelength = SPEED_OF_LIGHT / p.frequency
        eff = float(directivity / (4 * np.pi * aperture_area / wavelength ** 2))
        if eff > 1.0:
            warnings.warn(f"aperture efficiency estimate {eff:.3f} exceeds 1", RuntimeWarning,
                          stacklevel=2)
    return PatternMetrics(float(a_ax[gi]), float(b_ax[gj]), float(_db(power[gi, gj])),
                          float(a_ax[mi]), float(b_ax[mj]), sll, hpbw_az, hpbw_el,
                          float(_db(directivity)), eff, method)


@dataclass
class SweepResult:
    directions: list
    metrics: list

    @property
    def worst_sll_db(self) -> float:
        return max(m.sll_db for m in self.metrics)

    @property
    def min_efficiency(self) -> float:
        return min(m.efficiency for m in self.metrics)

    def to_csv(self, header_comment=None) -> str:
        return metrics_csv(self.metrics, self.directions, header_comment,
                           summary={"worst_sll_db": self.worst_sll_db,
                                    "min_efficiency": self.min_efficiency})


def steering_sweep(layout, errors, cal_source, directions, grid: DirectionGrid | None = None,
                   mainlobe_exclusion="auto") -> SweepResult:
    """Load the table for each commanded direction, re-simulate, and measure."""
    grid = DirectionGrid.regular() if grid is None else grid
    area = layout.aperture_size[0] * layout.aperture_size[1]
    out = []
    for d in directions:
        table = cal_source(*d)
        pattern = simulate_far_field(layout, table.to_chains(), errors, grid)
        out.append(pattern_metrics(pattern, main=d, mainlobe_exclusion=mainlobe_exclusion,
                                   aperture_area=area))
    return SweepResult([tuple(map(float, d)) for d in directions], out)


def pattern_cut(p: FarFieldPattern, plane="azimuth", at=0.0):
    """Normalized dB cut: ``azimuth`` varies alpha at elevation ``at``;
    ``elevation`` varies beta at azimuth ``at``. Power is linearly
    interpolated between grid lines."""
    a_ax, b_ax = _require_regular(p)
    power = p.power
    ref = power.max()
    if plane == "azimuth":
        axis, other, arr = a_ax, b_ax, power
    elif plane == "elevation":
        axis, other, arr = b_ax, a_ax, power.T
    else:
        raise ValueError("plane must be 'azimuth' or 'elevation'")
    if not other[0] - 1e-9 <= at <= other[-1] + 1e-9:
        raise ValueError(f"cut position {at} outside the grid")
    j = int(np.clip(np.searchsorted(other, at) - 1, 0, other.size - 2))
    t = (at - other[j]) / (other[j + 1] - other[j])
    t = min(max(t, 0.0), 1.0)
    cut = (1 - t) * arr[:, j] + t * arr[:, j + 1]
    return axis.copy(), _db(cut / ref)


def metrics_csv(metrics, directions=None, header_comment=None, summary=None, labels=None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    if summary:
        buf.write("# " + json.dumps(summary, sort_keys=True) + "\n")
    fields = list(PatternMetrics.__dataclass_fields__)
    w = csv.writer(buf, lineterminator="\n")
    head = (["label"] if labels is not None else []) + \
        (["cmd_alpha_deg", "cmd_beta_deg"] if directions is not None else [])
    w.writerow(head + fields)
    for idx, m in enumerate(metrics):
        row = [repr(v) if isinstance(v, float) else v for v in m.as_dict().values()]
        if directions is not None:
            row = [repr(float(directions[idx][0])), repr(float(directions[idx][1]))] + row
        if labels is not None:
            row = [labels[idx]] + row
        w.writerow(row)
    return buf.getvalue()


def cut_csv(angles, db, header_comment=None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    buf.write("angle_deg,level_db\n")
    for a, v in zip(angles, db):
        buf.write(f"{float(a)!r},{float(v)!r}\n")
    return buf.getvalue()
