"""Wall-time comparison of the compiled and numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--t-end 20]
"""

from __future__ import annotations

import argparse
import time

from nlocal import kernels
from nlocal.dynamics import (
    DriveSpec,
    IntegratorConfig,
    LindbladSpec,
    evolve_lindblad,
    resonant_frequency,
)
from nlocal.hamiltonian import (
    SpuriousModel,
    all_configurations,
    coupling_free_spec,
    default_spec,
    sample_spurious,
)
from nlocal.spectroscopy import epsilon_grid, hamiltonian_stack


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_eigh(n: int, repeat: int) -> tuple[float, float]:
    spec = sample_spurious(default_spec(n, 0), SpuriousModel(seed=0)).with_coupler(True)
    H = hamiltonian_stack(spec, all_configurations(n), epsilon_grid(spec.epsilon_max))
    return tuple(best_of(lambda b=b: kernels.lowest_eigh(H, 2, backend=b), repeat) for b in ("compiled", "python"))


def bench_lindblad(n: int, t_end: float, repeat: int) -> tuple[float, float]:
    spec = coupling_free_spec(n)
    drive = DriveSpec(M=spec.M, omega=resonant_frequency(spec))
    return tuple(
        best_of(lambda b=b: evolve_lindblad(spec, drive, LindbladSpec(100.0), t_end, config=IntegratorConfig(backend=b)),
                repeat)
        for b in ("compiled", "python")
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--t-end", type=float, default=20.0, help="Lindblad run length in ns")
    args = parser.parse_args()
    if kernels.BACKEND != "compiled":
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    print(f"{'kernel':<22}{'n':>3}{'compiled s':>14}{'python s':>14}{'speedup':>10}")
    for n in range(2, 7):
        c, p = bench_eigh(n, args.repeat)
        print(f"{'sweep eigensolve':<22}{n:>3}{c:>14.4g}{p:>14.4g}{p / c:>10.1f}")
    for n in range(2, 6):
        c, p = bench_lindblad(n, args.t_end, max(1, args.repeat // 3))
        print(f"{'lindblad rk4':<22}{n:>3}{c:>14.4g}{p:>14.4g}{p / c:>10.1f}")


if __name__ == "__main__":
    main()
