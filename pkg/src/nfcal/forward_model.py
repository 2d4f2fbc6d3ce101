"""
Simulated chamber: near-field probe scans and far-field patterns of a
sub-array tiled aperture with per-sub-array hardware errors.

Conventions: time dependence ``exp(+j w t)``, so a spherical wave is
``exp(-j k r) / r`` and a far-field contribution from an element at
``(x_e, y_e)`` carries ``exp(+j (kx x_e + ky y_e))``. The probe plane is
``z = 0``; the antenna lies ``delta_z`` behind it at ``z = -delta_z``.
Angles at interfaces are degrees: azimuth ``alpha`` and elevation ``beta``
with ``kx = k sin(alpha) cos(beta)``, ``ky = k sin(beta)``,
``kz = k cos(alpha) cos(beta)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import ApertureLayout, SPEED_OF_LIGHT

PHASE_BITS = 6
GAIN_BITS = 5
PHASE_STEP_DEG = 360.0 / 2 ** PHASE_BITS
DEFAULT_GAIN_STEP_DB = 0.5


class GeometryError(ValueError):
    pass


@dataclass
class ChainState:
    subarray_id: int
    phase_reg: int = 0
    gain_reg: int = 0
    gain_step_db: float = DEFAULT_GAIN_STEP_DB

    def __post_init__(self):
        if not 0 <= self.phase_reg < 2 ** PHASE_BITS:
            raise ValueError(f"phase_reg {self.phase_reg} outside 6-bit range")
        if not 0 <= self.gain_reg < 2 ** GAIN_BITS:
            raise ValueError(f"gain_reg {self.gain_reg} outside 5-bit range")

    @property
    def phase_deg(self) -> float:
        return self.phase_reg * PHASE_STEP_DEG

    @property
    def gain_db(self) -> float:
        return self.gain_reg * self.gain_step_db


def default_chains(layout: ApertureLayout) -> list[ChainState]:
    return [ChainState(sa.id) for sa in layout.subarrays]


@dataclass
class ChainErrorModel:
    """Hidden static per-sub-array offsets (and optional per-element jitter)."""

    phase_offset_deg: np.ndarray
    gain_offset_db: np.ndarray
    seed: int | None = None
    element_jitter_deg: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @classmethod
    def draw(cls, n_subarrays, seed, phase_range_deg=(0.0, 360.0), gain_sigma_db=1.0,
             element_jitter_std_deg=0.0, n_elements=None) -> "ChainErrorModel":
        rng = np.random.default_rng(seed)
        phase = rng.uniform(phase_range_deg[0], phase_range_deg[1], n_subarrays)
        gain = rng.normal(0.0, gain_sigma_db, n_subarrays)
        jitter = None
        if element_jitter_std_deg > 0:
            if n_elements is None:
                raise ValueError("n_elements is required for per-element jitter")
            jitter = rng.normal(0.0, element_jitter_std_deg, n_elements)
        params = {
            "phase_range_deg": list(phase_range_deg),
            "gain_sigma_db": gain_sigma_db,
            "element_jitter_std_deg": element_jitter_std_deg,
        }
        return cls(phase, gain, seed, jitter, params)

    @classmethod
    def ideal(cls, n_subarrays) -> "ChainErrorModel":
        return cls(np.zeros(n_subarrays), np.zeros(n_subarrays))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "params": self.params,
            "phase_offset_deg": self.phase_offset_deg.tolist(),
            "gain_offset_db": self.gain_offset_db.tolist(),
            "element_jitter_deg": None if self.element_jitter_deg is None
            else self.element_jitter_deg.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "ChainErrorModel":
        jit = d.get("element_jitter_deg")
        return cls(np.asarray(d["phase_offset_deg"], float), np.asarray(d["gain_offset_db"], float),
                   d.get("seed"), None if jit is None else np.asarray(jit, float), d.get("params", {}))


@dataclass
class FieldGrid:
    """Complex samples on a regular plane; ``samples[i, j]`` is at
    ``(x0 + i dx, y0 + j dy, z_plane)``."""

    z_plane: float
    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int
    frequency: float
    samples: np.ndarray | None = None

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("field grid needs at least 2x2 samples")
        if self.samples is not None:
            self.samples = np.asarray(self.samples, dtype=np.complex128)
            if self.samples.shape != (self.nx, self.ny):
                raise ValueError(f"samples shape {self.samples.shape} != ({self.nx}, {self.ny})")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def with_samples(self, samples) -> "FieldGrid":
        return FieldGrid(self.z_plane, self.x0, self.y0, self.dx, self.dy, self.nx, self.ny,
                         self.frequency, samples)

    def descriptor(self) -> "FieldGrid":
        return self.with_samples(None)


def default_scan_plane(layout: ApertureLayout, delta_z=None, spacing=None,
                       angle_deg=60.0) -> FieldGrid:
    """Probe plane covering the aperture plus ``2 delta_z tan(angle)`` per side.

    Defaults: ``delta_z = 10 lambda``, ``spacing = lambda / 2``.
    """
    lam = layout.wavelength
    dz = 10.0 * lam if delta_z is None else delta_z
    h = lam / 2.0 if spacing is None else spacing
    w, hgt = layout.aperture_size
    margin = 2.0 * dz * np.tan(np.radians(angle_deg))
    nx = int(np.ceil((w + 2 * margin) / h)) + 1
    ny = int(np.ceil((hgt + 2 * margin) / h)) + 1
    return FieldGrid(0.0, -(nx - 1) * h / 2.0, -(ny - 1) * h / 2.0, h, h, nx, ny, layout.frequency)


@dataclass
class DirectionGrid:
    """Directions in degrees; ``alpha`` and ``beta`` share any array shape.

    Regular grids built by :meth:`regular` also carry the 1-D axes
    (``alpha`` varies along axis 0).
    """

    alpha: np.ndarray
    beta: np.ndarray
    alpha_axis: np.ndarray | None = None
    beta_axis: np.ndarray | None = None

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have the same shape")
        if np.any(np.abs(self.alpha) > 90 + 1e-9) or np.any(np.abs(self.beta) > 90 + 1e-9):
            raise ValueError("directions must lie in the forward hemisphere (|alpha|, |beta| <= 90)")

    @classmethod
    def regular(cls, alpha_lim=(-90.0, 90.0), beta_lim=(-90.0, 90.0), step=0.5) -> "DirectionGrid":
        a = _axis(alpha_lim, step)
        b = _axis(beta_lim, step)
        aa, bb = np.meshgrid(a, b, indexing="ij")
        return cls(aa, bb, a, b)

    @classmethod
    def points(cls, pairs) -> "DirectionGrid":
        arr = np.atleast_2d(np.asarray(pairs, dtype=float))
        return cls(arr[:, 0], arr[:, 1])

    @property
    def shape(self):
        return self.alpha.shape

    def direction_cosines(self):
        a = np.radians(self.alpha)
        b = np.radians(self.beta)
        return np.sin(a) * np.cos(b), np.sin(b), np.cos(a) * np.cos(b)

    def wavenumbers(self, wavelength):
        k = 2.0 * np.pi / wavelength
        u, v, w = self.direction_cosines()
        return k * u, k * v, k * w

    def is_regular(self) -> bool:
        return self.alpha_axis is not None and self.beta_axis is not None


def _axis(lim, step):
    n = int(round((lim[1] - lim[0]) / step))
    return lim[0] + step * np.arange(n + 1)


@dataclass
class FarFieldPattern:
    directions: DirectionGrid
    values: np.ndarray
    frequency: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.directions.shape:
            raise ValueError("pattern values do not match the direction grid")

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def db(self, normalize=True) -> np.ndarray:
        p = self.power
        ref = p.max() if normalize else 1.0
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(p / ref)


def element_pattern(cos_theta):
    """Cosine element pattern, zero behind the ground plane."""
    return np.clip(cos_theta, 0.0, None)


def element_weights(layout: ApertureLayout, chains=None, errors=None, only=None) -> np.ndarray:
    """Complex excitation per element (layout element order).

    Chains combine register settings with hidden offsets; sub-arrays whose
    ids are not in ``only`` are powered off.
    """
    n_sub = len(layout.subarrays)
    phase = np.zeros(n_sub)
    gain = np.zeros(n_sub)
    if chains is not None:
        by_id = {ch.subarray_id: ch for ch in chains}
        for idx, sa in enumerate(layout.subarrays):
            ch = by_id.get(sa.id)
            if ch is not None:
                phase[idx] = ch.phase_deg
                gain[idx] = ch.gain_db
    if errors is not None:
        if len(errors.phase_offset_deg) != n_sub:
            raise ValueError("error model size does not match the layout")
        phase = phase + errors.phase_offset_deg
        gain = gain + errors.gain_offset_db
    _, _, owner = layout.element_arrays()
    elem_phase = phase[owner]
    if errors is not None and errors.element_jitter_deg is not None:
        elem_phase = elem_phase + errors.element_jitter_deg
    w = 10.0 ** (gain[owner] / 20.0) * np.exp(1j * np.radians(elem_phase))
    if only is not None:
        ids = np.array([sa.id for sa in layout.subarrays])
        on = np.isin(ids, np.atleast_1d(only))
        if not on.any():
            raise KeyError(f"no sub-array ids among {only}")
        w = np.where(on[owner], w, 0.0)
    return w


def simulate_near_field_scan(layout: ApertureLayout, chains=None, errors=None, plane=None,
                             antenna_offset=(0.0, 0.0, None), only=None) -> FieldGrid:
    """Probe samples ``sum_e w_e cos(theta_e) exp(-j k r_e) / r_e`` on the scan plane.

    ``antenna_offset = (dx, dy, dz)`` places the aperture center at
    ``(dx, dy, -dz)``; ``dz`` defaults to ten wavelengths. The probe is an
    ideal isotropic co-polarized point receiver.
    """
    lam = layout.wavelength
    ox, oy, dz = antenna_offset
    dz = 10.0 * lam if dz is None else float(dz)
    if dz <= 0:
        raise GeometryError("antenna must lie strictly behind the probe plane (delta_z > 0)")
    if plane is None:
        plane = default_scan_plane(layout, dz)
    if plane.dx > lam / 2 * (1 + 1e-9) or plane.dy > lam / 2 * (1 + 1e-9):
        raise ValueError("scan spacing must not exceed lambda/2")
    ex, ey, _ = layout.element_arrays()
    w = element_weights(layout, chains, errors, only)
    px, py = plane.mesh()
    k = 2.0 * np.pi / lam
    h = kernels.near_field(px.ravel(), py.ravel(), ex + ox, ey + oy, w, k, dz)
    return FieldGrid(plane.z_plane, plane.x0, plane.y0, plane.dx, plane.dy, plane.nx, plane.ny,
                     layout.frequency, h.reshape(plane.nx, plane.ny))


def simulate_far_field(layout: ApertureLayout, chains=None, errors=None, directions=None,
                       offset=(0.0, 0.0), only=None, weights=None) -> FarFieldPattern:
    """Direct-summation far field ``sum_e w_e E(dir) exp(+j (kx x_e + ky y_e))``."""
    if directions is None:
        directions = DirectionGrid.regular()
    ex, ey, _ = layout.element_arrays()
    w = element_weights(layout, chains, errors, only) if weights is None else np.asarray(weights)
    kx, ky, kz = directions.wavenumbers(layout.wavelength)
    k = 2.0 * np.pi / layout.wavelength
    af = kernels.far_field(kx.ravel(), ky.ravel(), ex + offset[0], ey + offset[1], w)
    vals = af.reshape(directions.shape) * element_pattern(kz / k)
    return FarFieldPattern(directions, vals, layout.frequency)


def subarray_reference_pattern(layout: ApertureLayout, subarray_id, directions) -> FarFieldPattern:
    """Ideal-chain pattern of one sub-array at its true aperture position."""
    return simulate_far_field(layout, None, None, directions, only=[subarray_id])


def subarray_reference_patterns(layout: ApertureLayout, directions) -> np.ndarray:
    """Reference patterns of every sub-array, shape ``(n_subarrays, *directions.shape)``."""
    return np.stack([subarray_reference_pattern(layout, sa.id, directions).values
                     for sa in layout.subarrays])
