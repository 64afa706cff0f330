"""Compare the compiled and pure-Python clustering kernels.

Usage: python benchmarks/bench_hac.py [--sizes 2000 8000 14000] [--repeat 3]
"""
import argparse
import math
import time

import numpy as np

from bss_expand import kernels
from bss_expand.cluster import agglomerate
from bss_expand.geo import GeoPoint

M_PER_DEG = 6_371_000.0 * math.pi / 180.0


def city_points(n: int, seed: int = 0):
    """Endpoints jittered around hotspots, roughly the density of a city dataset."""
    rng = np.random.default_rng(seed)
    hubs = rng.uniform(0, 9000, size=(max(1, n // 60), 2))
    pick = hubs[rng.integers(0, len(hubs), n)] + rng.normal(0, 60, size=(n, 2))
    lat0, lon0 = 53.30, -6.35
    lat = lat0 + pick[:, 1] / M_PER_DEG
    lon = lon0 + pick[:, 0] / (M_PER_DEG * math.cos(math.radians(lat0)))
    return [(f"L{k:06d}", GeoPoint(float(a), float(b))) for k, (a, b) in enumerate(zip(lat, lon))]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[2000, 8000, 14000])
    ap.add_argument("--cut", type=float, default=100.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    available = kernels.backends()
    print(f"backends: {', '.join(sorted(available))}")
    print(f"{'n':>7} {'backend':>8} {'pairs':>9} {'hac_s':>9} {'speedup':>8}")
    for n in args.sizes:
        pts = city_points(n)
        lat = np.array([p.lat for _, p in pts])
        lon = np.array([p.lon for _, p in pts])
        results = {}
        for name in ("python", "cython"):
            if name not in available:
                continue
            n_pairs = len(available[name].neighbor_pairs(lat, lon, args.cut)[0])
            results[name] = (n_pairs, best_of(lambda: agglomerate(pts, args.cut, backend=name), args.repeat))
        if len(results) == 2:
            a, _ = agglomerate(pts, args.cut, backend="python")
            b, _ = agglomerate(pts, args.cut, backend="cython")
            assert a == b, "backends disagree"
        base = results.get("python", (0, float("nan")))[1]
        for name, (n_pairs, t) in results.items():
            print(f"{n:>7} {name:>8} {n_pairs:>9} {t:>9.3f} {base / t:>7.1f}x")


if __name__ == "__main__":
    main()
