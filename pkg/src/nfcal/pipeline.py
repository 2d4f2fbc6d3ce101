"""
End-to-end scenario: tiling, one full-array scan, transforms, calibration
for every steering direction, re-simulation and metrics.
"""
from __future__ import annotations

import json
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields

from . import __version__
from .calibration import (CalibrationTable, boresight_calibrate, nonboresight_calibrate,
                          reference_pattern_set, registers_text)
from .forward_model import (ChainErrorModel, DirectionGrid, FieldGrid, default_scan_plane,
                            element_weights, simulate_far_field, simulate_near_field_scan)
from .formats import pattern_csv, scenario_hash, write_field_grid, write_spectrum
from .geometry import SubArrayShape, generate_tiling
from .metrics import metrics_csv, cut_csv, normalized_peak_db, pattern_cut, pattern_metrics
from .transforms import ShapeMask, element_reference, ffnf, locate_aperture, nfff, reference_correct


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-tagged with the stage name
        raise StageError(name, exc) from exc


@dataclass
class ScenarioConfig:
    """All knobs of a run. Angles in degrees, lengths in wavelengths unless
    suffixed ``_m``, frequency in Hz."""

    frequency: float = 73e9
    grid_rows: int = 16
    grid_cols: int = 16
    shapes: list = field(default_factory=lambda: ["1x8", "8x1", "2x4", "4x2"])
    tiling_seed: int = 1
    error_seed: int = 0
    phase_range_deg: list = field(default_factory=lambda: [0.0, 360.0])
    gain_sigma_db: float = 1.0
    element_jitter_deg: float = 0.0
    delta_z_wl: float = 10.0
    scan_spacing_wl: float = 0.5
    scan_angle_deg: float = 60.0
    pad_factor: int = 4
    taper: float = 0.0
    reference_correction: bool = True
    reference_floor: float = 0.05
    roi_spacing_wl: float = 1.0 / 16.0
    roi_margin_wl: float = 2.0
    guard: float = 0.25
    threshold_deg: float = 30.0
    gain_step_db: float = 0.5
    constant_deg: float = 0.0
    directions: list = field(default_factory=lambda: [[float(a), 0.0] for a in range(-15, 16, 5)])
    pattern_step_deg: float = 0.5
    output_dir: str = "nfcal_out"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))

    def validate(self):
        for s in self.shapes:
            SubArrayShape.parse(s)
        if self.scan_spacing_wl > 0.5:
            raise ValueError("scan spacing must not exceed half a wavelength")
        if self.delta_z_wl <= 0:
            raise ValueError("delta_z_wl must be positive")
        if self.pad_factor < 1:
            raise ValueError("pad_factor must be >= 1")
        for d in self.directions:
            if len(d) != 2:
                raise ValueError(f"direction {d!r} is not an (alpha, beta) pair")

    def digest(self) -> bytes:
        """Scenario hash: config (minus output location) and package version."""
        d = self.to_dict()
        d.pop("output_dir")
        return scenario_hash({"config": d, "version": __version__})


def transform_scan(scan: FieldGrid, delta_z, pad_factor=4, taper=0.0, reference_correction=True,
                   floor=0.05):
    """NFFF of a full-array scan, corrected by the ideal element reference."""
    spec = nfff(scan, pad_factor, taper)
    if reference_correction:
        ref_meas, ref_true = element_reference(scan.descriptor(), delta_z, pad_factor, taper)
        spec = reference_correct(spec, ref_meas, ref_true, floor)
    return spec


def roi_grid(layout, center, z_plane, spacing_wl=1.0 / 16.0, margin_wl=2.0) -> FieldGrid:
    """Fine aperture-plane grid: the footprint plus ``margin_wl`` each side around ``center``."""
    lam = layout.wavelength
    h = spacing_wl * lam
    half_x = layout.aperture_size[0] / 2 + margin_wl * lam
    half_y = layout.aperture_size[1] / 2 + margin_wl * lam
    nx = int(round(2 * half_x / h)) + 1
    ny = int(round(2 * half_y / h)) + 1
    return FieldGrid(z_plane, center[0] - half_x, center[1] - half_y, h, h, nx, ny, layout.frequency)


def reconstruct_aperture(scan: FieldGrid, layout, delta_z, pad_factor=4, taper=0.0,
                         reference_correction=True, floor=0.05, roi_spacing_wl=1.0 / 16.0,
                         roi_margin_wl=2.0):
    """Scan to located fine aperture field: ``(spectrum, coarse, fine, center)``."""
    spec = transform_scan(scan, delta_z, pad_factor, taper, reference_correction, floor)
    mask = ShapeMask.from_layout(layout)
    coarse = ffnf(spec, delta_z)
    c0 = locate_aperture(coarse, mask)
    fine = ffnf(spec, delta_z, roi_grid(layout, c0, coarse.z_plane, roi_spacing_wl, roi_margin_wl))
    return spec, coarse, fine, locate_aperture(fine, mask)


def direction_tag(d) -> str:
    return f"a{float(d[0]):+05.1f}_b{float(d[1]):+05.1f}"


@dataclass
class PipelineResult:
    config: ScenarioConfig
    layout: object
    errors: ChainErrorModel
    scan: FieldGrid
    spectrum: object
    coarse_field: FieldGrid
    fine_field: FieldGrid
    center: tuple
    bore: CalibrationTable
    tables: dict
    metrics: dict
    ledger: dict
    files: list = field(default_factory=list)


def run_pipeline(config: ScenarioConfig, output_dir=None, write=True) -> PipelineResult:
    """Run the full scenario; artifacts are written as each stage finishes,
    so a failing stage leaves the earlier ones on disk."""
    config.validate()
    out = output_dir or os.environ.get("NFCAL_OUTPUT_DIR") or config.output_dir
    digest = config.digest()
    tag = f"nfcal {__version__} scenario {digest.hex()}"
    files = []

    def emit(name, content):
        if not write:
            return
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, name)
        if callable(content):
            content(path)
        else:
            with open(path, "w", newline="") as f:
                f.write(content)
        files.append(name)

    scans = {"full_array": 0, "per_subarray": 0}

    with stage("config"):
        emit("config.json", config.to_json() + "\n")

    with stage("gen-tiling"):
        shapes = [SubArrayShape.parse(s) for s in config.shapes]
        layout = generate_tiling(config.grid_rows, config.grid_cols, shapes, config.tiling_seed,
                                 config.frequency)
        lam = layout.wavelength
        emit("layout.json", layout.to_json(scenario=digest.hex()) + "\n")

    with stage("errors"):
        errors = ChainErrorModel.draw(len(layout.subarrays), config.error_seed,
                                      tuple(config.phase_range_deg), config.gain_sigma_db,
                                      config.element_jitter_deg, layout.n_elements)
        emit("errors.json", json.dumps(dict(errors.to_dict(), scenario=digest.hex()), indent=1) + "\n")

    dz = config.delta_z_wl * lam
    with stage("scan"):
        plane = default_scan_plane(layout, dz, config.scan_spacing_wl * lam, config.scan_angle_deg)
        scan = simulate_near_field_scan(layout, None, errors, plane, (0.0, 0.0, dz))
        scans["full_array"] += 1
        emit("scan.fgrid", lambda p: write_field_grid(p, scan, digest))

    with stage("nfff"):
        spec = transform_scan(scan, dz, config.pad_factor, config.taper,
                              config.reference_correction, config.reference_floor)
        emit("spectrum.nfs", lambda p: write_spectrum(p, spec, digest))

    mask = ShapeMask.from_layout(layout)
    with stage("ffnf"):
        coarse = ffnf(spec, dz)
        emit("aperture_coarse.fgrid", lambda p: write_field_grid(p, coarse, digest))

    with stage("locate"):
        c0 = locate_aperture(coarse, mask)
        roi = roi_grid(layout, c0, coarse.z_plane, config.roi_spacing_wl, config.roi_margin_wl)
        fine = ffnf(spec, dz, roi)
        center = locate_aperture(fine, mask)
        emit("aperture_fine.fgrid", lambda p: write_field_grid(p, fine, digest))
        emit("locate.json", json.dumps({"coarse_center_m": list(c0), "center_m": list(center),
                                        "scenario": digest.hex()}, indent=1) + "\n")

    with stage("calibrate"):
        bore = boresight_calibrate(fine, layout, center, config.guard, config.threshold_deg,
                                   config.gain_step_db)
        dirs = [tuple(map(float, d)) for d in config.directions]
        refs = reference_pattern_set(layout, dirs)
        tables = {}
        for d in dirs:
            tables[d] = bore if d == (0.0, 0.0) else nonboresight_calibrate(
                bore, layout, refs, d, config.constant_deg)
        emit("table_bore.csv", bore.to_csv(tag))
        for d, t in tables.items():
            emit(f"table_{direction_tag(d)}.csv", t.to_csv(tag))
            emit(f"registers_{direction_tag(d)}.txt", registers_text(t.to_chains()))

    with stage("metrics"):
        grid = DirectionGrid.regular(step=config.pattern_step_deg)
        area = layout.aperture_size[0] * layout.aperture_size[1]
        ideal = simulate_far_field(layout, None, None, grid)
        ideal_peak = normalized_peak_db(ideal, element_weights(layout))
        pre = simulate_far_field(layout, None, errors, grid)
        labels, mlist, mdirs, summary = [], [], [], {}
        for label, pat, d, w in [("ideal", ideal, (0.0, 0.0), element_weights(layout)),
                                 ("precal", pre, (0.0, 0.0), element_weights(layout, None, errors))]:
            m = pattern_metrics(pat, main=d, aperture_area=area)
            labels.append(label)
            mlist.append(m)
            mdirs.append(d)
            summary[f"{label}_peak_rel_ideal_db"] = normalized_peak_db(pat, w) - ideal_peak
        emit("cut_ideal_azimuth.csv", cut_csv(*pattern_cut(ideal, "azimuth", 0.0), tag))
        emit("cut_precal_azimuth.csv", cut_csv(*pattern_cut(pre, "azimuth", 0.0), tag))
        results = {}
        for d, t in tables.items():
            chains = t.to_chains()
            pat = simulate_far_field(layout, chains, errors, grid)
            m = pattern_metrics(pat, main=d, aperture_area=area)
            rel = normalized_peak_db(pat, element_weights(layout, chains, errors)) - ideal_peak
            results[d] = {"metrics": m, "peak_rel_ideal_db": rel}
            labels.append("cal")
            mlist.append(m)
            mdirs.append(d)
            dt = direction_tag(d)
            emit(f"cut_{dt}_azimuth.csv", cut_csv(*pattern_cut(pat, "azimuth", d[1]), tag))
            emit(f"cut_{dt}_elevation.csv", cut_csv(*pattern_cut(pat, "elevation", d[0]), tag))
            if d == (0.0, 0.0):
                emit("pattern_bore.csv", pattern_csv(pat, tag))
        cal = [r["metrics"] for r in results.values()]
        summary.update({
            "worst_sll_db": max(m.sll_db for m in cal),
            "min_efficiency": min(m.efficiency for m in cal),
        })
        if (0.0, 0.0) in results:
            summary["bore_peak_rel_ideal_db"] = results[(0.0, 0.0)]["peak_rel_ideal_db"]
            summary["bore_sll_db"] = results[(0.0, 0.0)]["metrics"].sll_db
        emit("metrics.csv", metrics_csv(mlist, mdirs, tag, summary, labels))
        results["summary"] = summary
        results["precal"] = mlist[1]
        results["ideal"] = mlist[0]

    ledger = {
        "scenario": digest.hex(),
        "calibration_scans": dict(scans),
        "directions_calibrated": len(tables),
        "directions": [list(d) for d in tables],
        "naive_scans_required": len(layout.subarrays),
        "scan_reduction": f"{len(layout.subarrays)}:{scans['full_array']}",
    }
    with stage("ledger"):
        emit("ledger.json", json.dumps(ledger, indent=1) + "\n")
        emit("manifest.json", json.dumps({"scenario": digest.hex(), "version": __version__,
                                          "files": sorted(files)}, indent=1) + "\n")

    return PipelineResult(config, layout, errors, scan, spec, coarse, fine, center, bore, tables,
                          results, ledger, files)

