"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--atoms N] [--repeat K]

Each backend runs in its own interpreter (the switch is read at import).
A warm-up call absorbs JIT compilation before timing.
"""
import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
from blochere import _accel
from blochere.ensemble import run_ensemble
from blochere.field import MODE_SUM, DriveConfig
from blochere.spectrum import SpectrumSpec
atoms, repeat = int(sys.argv[1]), int(sys.argv[2])
cases = {
    "colored_noise inversion": (SpectrumSpec.lorentzian(50.0, 0.1), DriveConfig(), "inversion"),
    "colored_noise population": (SpectrumSpec.lorentzian(50.0, 0.1), DriveConfig(), "population"),
    "mode_sum 128 modes": (SpectrumSpec.lorentzian(2.0, 1.0),
                           DriveConfig(MODE_SUM, n_modes=128, span_width=20), "inversion"),
}
out = {"path": _accel.kernel_path(), "times": {}}
for name, (spec, cfg, form) in cases.items():
    run_ensemble(spec, cfg, 8, 0.05, form=form)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        run_ensemble(spec, cfg, atoms, 2.0, form=form, seed=1)
        best = min(best, time.perf_counter() - t0)
    out["times"][name] = best
print(json.dumps(out))
"""


def run(flag, atoms, repeat):
    env = dict(os.environ, BLOCH_ERE_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKLOAD, str(atoms), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--atoms", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast, slow = run("1", args.atoms, args.repeat), run("0", args.atoms, args.repeat)
    print(f"{'case':28s} {fast['path']:>10s} {slow['path']:>10s} {'speedup':>8s}")
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        print(f"{name:28s} {t_fast:9.3f}s {t_slow:9.3f}s {t_slow / t_fast:7.1f}x")


if __name__ == "__main__":
    main()
