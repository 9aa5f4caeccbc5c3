#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy twins.

Builds one representative problem (shots x saturated grid), checks that both
implementation families agree to tight tolerance, then reports best-of-N
wall times per kernel:

    python3 benchmarks/bench_kernels.py --shots 50000 --repeats 5
"""

import argparse
import time

import numpy as np

from shotmix.kernels import numba_impls, numpy_impls
from shotmix.mixture import GridSpec, build_grid, component_arrays


def build_problem(n_shots: int, spec: GridSpec, seed: int):
    rng = np.random.default_rng(seed)
    comps = build_grid(spec)
    means, covs = component_arrays(comps)
    pts = np.column_stack([
        rng.normal(0.0, 2.0, n_shots),
        np.abs(rng.normal(0.8, 0.7, n_shots)),
    ])
    # a few impossible points keep the z < 0 branch honest
    pts[rng.random(n_shots) < 0.01, 1] *= -1.0
    log_w = np.log(rng.dirichlet(np.ones(len(comps))))
    values = rng.uniform(0.05, 0.6, len(comps))
    return np.ascontiguousarray(pts), means, covs, log_w, values


def best_of(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shots", type=int, default=50_000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pts, means, covs, log_w, values = build_problem(args.shots, GridSpec(), args.seed)
    families = {"numpy": numpy_impls(), "numba": numba_impls()}

    # correctness first: the two families must agree before timing means much
    ref, cmp_ = families["numpy"], families["numba"]
    dens_ref = ref["trunc_log_density_matrix"](pts, means, covs)
    dens_cmp = cmp_["trunc_log_density_matrix"](pts, means, covs)
    finite = np.isfinite(dens_ref)
    assert np.array_equal(finite, np.isfinite(dens_cmp))
    gap = np.max(np.abs(dens_ref[finite] - dens_cmp[finite]))
    dens = np.ascontiguousarray(dens_ref)
    ll_ref, col_ref = ref["em_estep"](dens, log_w)
    ll_cmp, col_cmp = cmp_["em_estep"](dens, log_w)
    gap = max(gap, abs(ll_ref - ll_cmp), np.max(np.abs(col_ref - col_cmp)))
    row_ref = ref["weighted_value_rows"](dens, log_w, values)
    row_cmp = cmp_["weighted_value_rows"](dens, log_w, values)
    gap = max(gap, np.max(np.abs(row_ref - row_cmp)))
    print(f"problem: {args.shots} shots x {means.shape[0]} components")
    print(f"max |numpy - numba| across kernels: {gap:.3e}")
    assert gap < 1e-10, "kernel families disagree"

    tasks = {
        "trunc_log_density_matrix": lambda f: f["trunc_log_density_matrix"](pts, means, covs),
        "em_estep": lambda f: f["em_estep"](dens, log_w),
        "weighted_value_rows": lambda f: f["weighted_value_rows"](dens, log_w, values),
    }
    print(f"\n{'kernel':<28}{'numpy':>10}{'numba':>10}{'speedup':>9}")
    for name, call in tasks.items():
        call(families["numba"])  # make sure compilation is out of the timings
        t_np = best_of(lambda: call(families["numpy"]), args.repeats)
        t_nb = best_of(lambda: call(families["numba"]), args.repeats)
        print(f"{name:<28}{t_np * 1e3:>8.1f}ms{t_nb * 1e3:>8.1f}ms{t_np / t_nb:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
