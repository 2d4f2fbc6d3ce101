"""
Plane-wave spectrum transforms between the probe plane and the aperture.

Forward (near field to far field)::

    R(kx, ky) = 1/(2 pi) * sum H(x, y) exp(+j (kx x + ky y)) dx dy

evaluated on the zero-padded DFT grid (``nfff``) or exactly at arbitrary
directions (``nfff_at``). The inverse back-propagates the spectrum by
``exp(+j kz dz)`` and applies ``1/(2 pi) * sum R exp(-j (kx x + ky y)) dkx dky``.
Phases are referenced to the absolute coordinate origin throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .forward_model import DirectionGrid, FarFieldPattern, FieldGrid
from .geometry import SPEED_OF_LIGHT


class SamplingError(ValueError):
    pass


class GridMismatch(ValueError):
    pass


class ShapeTooLarge(ValueError):
    pass


@dataclass
class AngularSpectrum:
    """Spectrum on the DFT grid of a (padded) spatial domain.

    ``values[m, n]`` belongs to ``(kx[m], ky[n])``; both axes ascend and
    include zero. ``x0, y0, dx, dy`` describe the padded spatial grid the
    spectrum is periodic over.
    """

    kx: np.ndarray
    ky: np.ndarray
    values: np.ndarray
    frequency: float
    z_plane: float
    x0: float
    y0: float
    dx: float
    dy: float

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency

    @property
    def k(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def dkx(self) -> float:
        return 2.0 * np.pi / (self.kx.size * self.dx)

    @property
    def dky(self) -> float:
        return 2.0 * np.pi / (self.ky.size * self.dy)

    def kgrid(self):
        return np.meshgrid(self.kx, self.ky, indexing="ij")

    @property
    def visible(self) -> np.ndarray:
        kx, ky = self.kgrid()
        return kx ** 2 + ky ** 2 <= self.k ** 2

    def kz(self) -> np.ndarray:
        """Real ``kz`` on the visible region, zero elsewhere."""
        kx, ky = self.kgrid()
        return np.sqrt(np.clip(self.k ** 2 - kx ** 2 - ky ** 2, 0.0, None))

    def directions(self) -> DirectionGrid:
        """(alpha, beta) of each visible grid point; NaN outside the visible region."""
        kx, ky = self.kgrid()
        vis = self.visible
        u = np.where(vis, kx / self.k, np.nan)
        v = np.where(vis, ky / self.k, np.nan)
        w = np.sqrt(np.clip(1.0 - u ** 2 - v ** 2, 0.0, None))
        beta = np.degrees(np.arcsin(np.clip(v, -1, 1)))
        alpha = np.degrees(np.arctan2(u, w))
        return DirectionGrid(alpha, beta)

    def with_values(self, values) -> "AngularSpectrum":
        return AngularSpectrum(self.kx, self.ky, values, self.frequency, self.z_plane,
                               self.x0, self.y0, self.dx, self.dy)


@dataclass(frozen=True)
class ShapeMask:
    """Rectangular footprint of the antenna aperture, in meters."""

    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("mask must be nonempty")

    @classmethod
    def from_layout(cls, layout) -> "ShapeMask":
        return cls(*layout.aperture_size)

    def raster(self, dx, dy) -> np.ndarray:
        mx = max(1, int(round(self.width / dx)))
        my = max(1, int(round(self.height / dy)))
        return np.ones((mx, my), dtype=bool)


def _check_sampling(dx, dy, wavelength):
    lim = wavelength / 2.0 * (1.0 + 1e-9)
    if dx > lim or dy > lim:
        raise SamplingError(
            f"sample spacing ({dx:.4g}, {dy:.4g}) m exceeds lambda/2 = {wavelength / 2:.4g} m")


def raised_cosine_taper(nx, ny, fraction):
    """Separable window flat in the middle with cosine roll-off over ``fraction`` of each edge."""
    def win(n):
        w = np.ones(n)
        m = int(round(fraction * n))
        if m > 0:
            ramp = 0.5 * (1 - np.cos(np.pi * (np.arange(m) + 0.5) / m))
            w[:m] = ramp
            w[n - m:] = ramp[::-1]
        return w
    return np.outer(win(nx), win(ny))


def nfff(scan: FieldGrid, pad_factor: int = 4, taper: float = 0.0) -> AngularSpectrum:
    """Discrete plane-wave spectrum of a planar scan on a zero-padded FFT grid."""
    _check_sampling(scan.dx, scan.dy, scan.wavelength)
    if pad_factor < 1:
        raise ValueError("pad_factor must be >= 1")
    h = scan.samples
    if taper:
        h = h * raised_cosine_taper(scan.nx, scan.ny, taper)
    nxp, nyp = scan.nx * pad_factor, scan.ny * pad_factor
    lx, ly = (nxp - scan.nx) // 2, (nyp - scan.ny) // 2
    hp = np.zeros((nxp, nyp), dtype=np.complex128)
    hp[lx:lx + scan.nx, ly:ly + scan.ny] = h
    x0p = scan.x0 - lx * scan.dx
    y0p = scan.y0 - ly * scan.dy

    # sum_i h_i exp(+j 2 pi m i / N) == N * ifft
    s = np.fft.ifft2(hp) * (nxp * nyp)
    s = np.fft.fftshift(s)
    kx = 2.0 * np.pi * np.fft.fftshift(np.fft.fftfreq(nxp, scan.dx))
    ky = 2.0 * np.pi * np.fft.fftshift(np.fft.fftfreq(nyp, scan.dy))
    s *= np.exp(1j * kx[:, None] * x0p) * np.exp(1j * ky[None, :] * y0p)
    s *= scan.dx * scan.dy / (2.0 * np.pi)
    return AngularSpectrum(kx, ky, s, scan.frequency, scan.z_plane, x0p, y0p, scan.dx, scan.dy)


def nfff_at(scan: FieldGrid, directions: DirectionGrid, chunk: int = 4096) -> np.ndarray:
    """Exact evaluation of the forward transform at arbitrary directions.

    Separable in y first (one pass per distinct elevation), then a gathered
    x-sum per direction. NaN directions return NaN.
    """
    _check_sampling(scan.dx, scan.dy, scan.wavelength)
    kx, ky, _ = directions.wavenumbers(scan.wavelength)
    kx = kx.ravel()
    ky = ky.ravel()
    out = np.full(kx.shape, np.nan + 0j)
    ok = np.isfinite(kx) & np.isfinite(ky)
    kx_ok, ky_ok = kx[ok], ky[ok]
    uniq, inv = np.unique(ky_ok, return_inverse=True)
    a = scan.samples @ np.exp(1j * np.outer(scan.y, uniq))  # (nx, n_uniq)
    x = scan.x
    res = np.empty(kx_ok.shape, dtype=np.complex128)
    for s in range(0, kx_ok.size, chunk):
        sl = slice(s, s + chunk)
        ex = np.exp(1j * np.outer(x, kx_ok[sl]))
        res[sl] = np.einsum("ij,ij->j", a[:, inv[sl]], ex)
    out[ok] = res * scan.dx * scan.dy / (2.0 * np.pi)
    return out.reshape(directions.shape)


def spectrum_to_far_field(values, directions: DirectionGrid, wavelength, delta_z):
    """Map plane-wave spectrum samples to far-field pattern values.

    A cosine-pattern source ``delta_z`` behind the scan plane has spectrum
    ``(-j/k) exp(-j kz dz) * AF``; multiplying by ``j kz exp(+j kz dz)``
    recovers ``cos(theta) * AF``.
    """
    _, _, kz = directions.wavenumbers(wavelength)
    return np.asarray(values) * 1j * kz * np.exp(1j * kz * delta_z)


def far_field_from_scan(scan: FieldGrid, directions: DirectionGrid, delta_z) -> FarFieldPattern:
    vals = spectrum_to_far_field(nfff_at(scan, directions), directions, scan.wavelength, delta_z)
    return FarFieldPattern(directions, vals, scan.frequency)


def reference_correct(spectrum: AngularSpectrum, ref_measured: FarFieldPattern,
                      ref_true: FarFieldPattern, floor: float = 0.05) -> AngularSpectrum:
    """Apply the pointwise ratio ``ref_true / ref_measured`` to the spectrum.

    Both references must be sampled at ``spectrum.directions()``. Where
    ``|ref_measured| < floor * max|ref_measured|`` (or outside the visible
    region) the factor is held at 1.
    """
    shape = spectrum.values.shape
    for ref in (ref_measured, ref_true):
        if ref.values.shape != shape:
            raise GridMismatch(f"reference grid {ref.values.shape} != spectrum grid {shape}")
    grid = spectrum.directions()
    for ref in (ref_measured, ref_true):
        same = np.allclose(ref.directions.alpha, grid.alpha, atol=1e-9, equal_nan=True) and \
            np.allclose(ref.directions.beta, grid.beta, atol=1e-9, equal_nan=True)
        if not same:
            raise GridMismatch("reference directions are not congruent with the spectrum grid")
    vis = spectrum.visible
    meas = np.where(vis, ref_measured.values, 0.0)
    mag = np.abs(meas)
    peak = np.nanmax(mag) if np.any(vis) else 0.0
    good = vis & (mag >= floor * peak) & (mag > 0)
    factor = np.ones(shape, dtype=np.complex128)
    factor[good] = ref_true.values[good] / ref_measured.values[good]
    return spectrum.with_values(spectrum.values * factor)


def point_source_scan(plane: FieldGrid, delta_z) -> FieldGrid:
    """Probe samples of one ideal cosine-pattern element at ``(0, 0, -delta_z)``."""
    k = 2.0 * np.pi / plane.wavelength
    px, py = plane.mesh()
    h = kernels.near_field(px.ravel(), py.ravel(), np.zeros(1), np.zeros(1),
                           np.ones(1, dtype=np.complex128), k, float(delta_z))
    return plane.with_samples(h.reshape(plane.nx, plane.ny))


def element_reference(plane: FieldGrid, delta_z, pad_factor: int = 4, taper: float = 0.0):
    """``(measured, true)`` reference pair for :func:`reference_correct`.

    The reference antenna is a single ideal element at the aperture center.
    ``measured`` is the NFFF of its scan truncated to ``plane``; ``true`` is
    its far-zone spectrum ``(-j/k) exp(-j kz dz)`` (the element's ``1/(k r)``
    near-zone term is left out). The ratio mainly restores wide-angle
    components that a finite scan attenuates; near bore-sight it adds a
    ripple of about 2 % for a 10-wavelength probe distance.
    """
    spec = nfff(point_source_scan(plane, delta_z), pad_factor, taper)
    grid = spec.directions()
    vis = spec.visible
    true = np.where(vis, (-1j / spec.k) * np.exp(-1j * spec.kz() * delta_z), 0.0)
    meas = np.where(vis, spec.values, 0.0)
    return (FarFieldPattern(grid, meas, plane.frequency),
            FarFieldPattern(grid, true, plane.frequency))


def propagate(spectrum: AngularSpectrum, delta_z: float, evanescent: str = "zero") -> AngularSpectrum:
    """Multiply by ``exp(+j kz dz)`` (back-propagation towards the antenna).

    ``evanescent="zero"`` drops components outside the visible region;
    ``"keep"`` retains them with their exact (growing) factor, which is only
    sensible for tiny or zero ``delta_z``.
    """
    k = spectrum.k
    kx, ky = spectrum.kgrid()
    vis = spectrum.visible
    kz = spectrum.kz()
    fac = np.exp(1j * kz * delta_z)
    if evanescent == "zero":
        fac = np.where(vis, fac, 0.0)
    elif evanescent == "keep":
        kappa = np.sqrt(np.clip(kx ** 2 + ky ** 2 - k ** 2, 0.0, None))
        fac = np.where(vis, fac, np.exp(kappa * delta_z))
    else:
        raise ValueError(f"unknown evanescent mode {evanescent!r}")
    out = spectrum.with_values(spectrum.values * fac)
    out.z_plane = spectrum.z_plane - delta_z
    return out


def ffnf(spectrum: AngularSpectrum, delta_z: float, grid: FieldGrid | None = None,
         evanescent: str = "zero") -> FieldGrid:
    """Back-propagate the spectrum by ``delta_z`` and return the plane field.

    Without ``grid`` the field comes back on the spectrum's full padded
    spatial grid (inverse FFT). With a ``grid`` descriptor it is evaluated
    on that grid by a separable inverse DFT, which allows finer sampling of a
    region of interest.
    """
    if delta_z < 0:
        raise ValueError("delta_z must be >= 0")
    p = propagate(spectrum, delta_z, evanescent)
    scale = spectrum.dkx * spectrum.dky / (2.0 * np.pi)
    z = spectrum.z_plane - delta_z
    if grid is None:
        nx, ny = spectrum.kx.size, spectrum.ky.size
        v = p.values * np.exp(-1j * spectrum.kx[:, None] * spectrum.x0) \
            * np.exp(-1j * spectrum.ky[None, :] * spectrum.y0)
        # sum_m v_m exp(-j 2 pi m i / N) == fft on the standard ordering
        h = np.fft.fft2(np.fft.ifftshift(v)) * scale
        return FieldGrid(z, spectrum.x0, spectrum.y0, spectrum.dx, spectrum.dy, nx, ny,
                         spectrum.frequency, h)
    ex = np.exp(-1j * np.outer(grid.x, spectrum.kx))
    ey = np.exp(-1j * np.outer(grid.y, spectrum.ky))
    h = (ex @ p.values @ ey.T) * scale
    return FieldGrid(z, grid.x0, grid.y0, grid.dx, grid.dy, grid.nx, grid.ny, spectrum.frequency, h)


def locate_aperture(field: FieldGrid, shape: ShapeMask, rtol: float = 1e-12):
    """Center of the mask translation maximising the enclosed ``sum |H|``.

    Sums within ``rtol`` of the maximum count as ties; the smallest x, then
    the smallest y wins.
    """
    mask = shape.raster(field.dx, field.dy)
    mx, my = mask.shape
    if mx > field.nx or my > field.ny:
        raise ShapeTooLarge(f"mask {mx}x{my} cells exceeds field {field.nx}x{field.ny}")
    sums = kernels.window_sums(np.abs(field.samples), mask)
    best = sums.max()
    cand = np.argwhere(sums >= best - rtol * abs(best))
    i, j = cand[0]
    return (field.x0 + (i + (mx - 1) / 2.0) * field.dx,
            field.y0 + (j + (my - 1) / 2.0) * field.dy)
