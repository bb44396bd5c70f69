"""Compare the compiled and numpy cone kernels, alone and inside a full relaxation solve.

Usage::

    python benchmarks/bench_kernels.py [--repeat 200] [--cones 60] [--dim 3]
"""

from __future__ import annotations

import argparse
import timeit
from pathlib import Path

import numpy as np

from hydroharvest.conic import kernels
from hydroharvest.conic.bnb import solve_relaxation
from hydroharvest.conic.kernels import backends
from hydroharvest.hydraulics import SlotInput, load_scenario
from hydroharvest.network import build_active_subgraph, load_network
from hydroharvest.relax import DiscretizationGrid, build_N4

KERNELS = ("nt_scaling", "scale_vec", "scale_mat_rows", "jordan_prod", "jordan_div", "max_step")
DATA = Path(__file__).resolve().parents[1] / "src" / "hydroharvest" / "data"


def interior(rng, l, q):
    v = np.empty(l + sum(q))
    v[:l] = rng.uniform(0.1, 2.0, l)
    off = l
    for d in q:
        tail = rng.normal(size=d - 1)
        v[off + 1 : off + d] = tail
        v[off] = np.linalg.norm(tail) + rng.uniform(0.05, 1.0)
        off += d
    return v


def kernel_times(impl, l, q, repeat):
    rng = np.random.default_rng(0)
    s, z = interior(rng, l, q), interior(rng, l, q)
    d = rng.normal(size=len(s))
    G = rng.normal(size=(len(s), 40))
    w, eta, wbar, lam = impl.nt_scaling(s, z, l, q)
    calls = {
        "nt_scaling": lambda: impl.nt_scaling(s, z, l, q),
        "scale_vec": lambda: impl.scale_vec(d, w, eta, wbar, l, q),
        "scale_mat_rows": lambda: impl.scale_mat_rows(G, w, eta, wbar, l, q),
        "jordan_prod": lambda: impl.jordan_prod(s, d, l, q),
        "jordan_div": lambda: impl.jordan_div(lam, d, l, q),
        "max_step": lambda: impl.max_step(s, d, l, q),
    }
    return {name: min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat for name, fn in calls.items()}


def solve_time(impl, repeat):
    net = load_network(DATA / "case21.json")
    g = build_active_subgraph(net)
    s = load_scenario(DATA / "scenario21.json").slots[0]
    slot = SlotInput(s.k, dict(s.demands), s.price, s.r, net.initial_volumes())
    grid = DiscretizationGrid.uniform(10, 10, 40.0, 6.5, sigma_min=5.5)
    prog = build_N4(net, g, slot, grid)
    assert solve_relaxation(prog).status == "optimal"
    saved = {k: getattr(kernels, k) for k in KERNELS}
    try:
        for k in KERNELS:
            setattr(kernels, k, getattr(impl, k))
        return min(timeit.repeat(lambda: solve_relaxation(prog), number=repeat, repeat=3)) / repeat
    finally:
        for k, v in saved.items():
            setattr(kernels, k, v)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200, help="calls per timing sample")
    ap.add_argument("--cones", type=int, default=60, help="second-order cones in the kernel layout")
    ap.add_argument("--dim", type=int, default=3, help="dimension of each cone")
    ap.add_argument("--orthant", type=int, default=200, help="nonnegative-orthant entries")
    args = ap.parse_args(argv)

    impls = backends()
    q = [args.dim] * args.cones
    print(f"layout: {args.orthant} orthant entries, {args.cones} cones of dimension {args.dim}")
    print(f"backends: {', '.join(impls)} (active: {kernels.BACKEND})\n")
    times = {name: kernel_times(impl, args.orthant, q, args.repeat) for name, impl in impls.items()}
    names = list(impls)
    header = f"{'kernel':<16}" + "".join(f"{n + ' (us)':>16}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for k in KERNELS:
        row = f"{k:<16}" + "".join(f"{times[n][k] * 1e6:>16.2f}" for n in names)
        if len(names) == 2:
            row += f"{times[names[0]][k] / times[names[1]][k]:>10.1f}x"
        print(row)

    print("\nroot relaxation of the 21-node harvesting program:")
    for name, impl in impls.items():
        print(f"  {name:<8} {solve_time(impl, max(1, args.repeat // 50)) * 1e3:8.1f} ms per solve")


if __name__ == "__main__":
    main()
