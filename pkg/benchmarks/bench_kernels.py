"""
Time the numba kernels against their numpy fallbacks on full-scale inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from nfcal import kernels
from nfcal.forward_model import DirectionGrid, default_scan_plane
from nfcal.geometry import ALL_SHAPES, generate_tiling


def cases():
    layout = generate_tiling(16, 16, ALL_SHAPES, 1)
    lam = layout.wavelength
    k = 2 * np.pi / lam
    dz = 10 * lam
    ex, ey, _ = layout.element_arrays()
    w = np.exp(1j * np.random.default_rng(0).uniform(0, 2 * np.pi, ex.size))
    plane = default_scan_plane(layout, dz)
    px, py = (a.ravel() for a in plane.mesh())
    kx, ky, _ = DirectionGrid.regular(step=0.5).wavenumbers(lam)
    kx, ky = kx.ravel(), ky.ravel()
    amp = np.random.default_rng(1).random((300, 300))
    mask = np.ones((128, 128), dtype=bool)
    phases = np.random.default_rng(2).uniform(0, 360, 300)
    return {
        f"near_field ({px.size} probes x {ex.size} elements)":
            (kernels.near_field_numba, kernels.near_field_numpy, (px, py, ex, ey, w, k, dz)),
        f"far_field ({kx.size} directions)":
            (kernels.far_field_numba, kernels.far_field_numpy, (kx, ky, ex, ey, w)),
        "window_sums (300x300 field, 128x128 mask)":
            (kernels.window_sums_numba, kernels.window_sums_numpy, (amp, mask)),
        "prune (300 phases, 30 deg)":
            (kernels.prune_numba, kernels.prune_numpy, (phases, 30.0)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba unavailable (or NFCAL_DISABLE_NUMBA set); nothing to compare")
    print(f"{'kernel':55s} {'numba s':>10s} {'numpy s':>10s} {'speed-up':>9s}")
    for name, (fast, slow, args_) in cases().items():
        fast(*args_)  # compile outside the timed region
        tf = min(timeit.repeat(lambda: fast(*args_), number=1, repeat=args.repeat))
        ts = min(timeit.repeat(lambda: slow(*args_), number=1, repeat=args.repeat))
        print(f"{name:55s} {tf:10.4f} {ts:10.4f} {ts / tf:8.1f}x")


if __name__ == "__main__":
    main()
