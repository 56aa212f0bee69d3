#!/usr/bin/env python3
"""Smoke test for the fobo Python extension.

Loads the module either from an installed wheel (``pip install crates/fobo-py``
with maturin available) or straight from a cargo build by renaming the cdylib
onto ``sys.path``:

    cargo build -p fobo-py
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import sysconfig
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def _import_fobo():
    try:
        import fobo  # noqa: F401  (installed wheel)

        return fobo
    except ImportError:
        pass
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    for profile in ("release", "debug"):
        built = REPO_ROOT / "target" / profile / "libfobo.so"
        if built.exists():
            staging = Path(tempfile.mkdtemp(prefix="fobo_py_"))
            shutil.copy2(built, staging / f"fobo{suffix}")
            sys.path.insert(0, str(staging))
            import fobo

            return fobo
    raise SystemExit(
        "fobo extension not found: run `cargo build -p fobo-py` first "
        "(or install it with pip/maturin)"
    )


def main():
    fobo = _import_fobo()

    # Folded-normal statistics: at mu=0 the mean is sigma * sqrt(2/pi).
    mean, std = fobo.folded_normal_stats(0.0, 1.0)
    assert abs(mean - math.sqrt(2.0 / math.pi)) < 1e-12, mean
    assert abs(std - math.sqrt(1.0 - 2.0 / math.pi)) < 1e-12, std

    # Expected improvement is the gap when the std collapses.
    assert abs(fobo.expected_improvement(1.5, 0.0, 1.0) - 0.5) < 1e-12

    # Benchmarks evaluate with exact gradients and deterministic noise.
    names = fobo.Benchmark.names()
    assert "branin" in names and "reg6d" in names, names
    bench = fobo.Benchmark("branin")
    assert bench.dim() == 2
    lower, upper = bench.domain()
    mid = [(lo + hi) / 2.0 for lo, hi in zip(lower, upper)]
    value, grad = bench.evaluate(mid)
    assert math.isfinite(value) and len(grad) == 2
    noisy_a = bench.observe(mid, 0.25, seed=7)
    noisy_b = bench.observe(mid, 0.25, seed=7)
    assert noisy_a == noisy_b, "observations with equal seeds must match"
    assert abs(noisy_a[2] - value) < 1e-12, "true value is noise-free"

    # GP fit and posterior prediction.
    inputs = [[i / 7.0] for i in range(8)]
    targets = [math.sin(4.0 * x[0]) for x in inputs]
    gp = fobo.fit_gp(inputs, targets, [0.0], [1.0], restarts=5, seed=3)
    post_mean, post_var = gp.posterior([0.5])
    assert abs(post_mean - math.sin(2.0)) < 0.05, post_mean
    assert post_var >= 0.0
    sv, ls, nv, cm = gp.hyperparams()
    assert sv > 0 and ls > 0 and nv >= 0 and math.isfinite(cm)
    assert math.isfinite(gp.log_marginal())

    # A short end-to-end optimization run, reproducible by seed.
    assert "gEI-MS" in fobo.algorithms()
    result = fobo.run("branin", "gei-ms", budget=3, master_seed=11, run_id=0)
    again = fobo.run("branin", "gei-ms", budget=3, master_seed=11, run_id=0)
    assert result.iterations == list(range(4))
    assert result.log10_regrets == again.log10_regrets, "runs must be deterministic"
    assert result.immediate_regrets == sorted(result.immediate_regrets, reverse=True) or all(
        a >= b for a, b in zip(result.immediate_regrets, result.immediate_regrets[1:])
    ), "regret is monotone non-increasing"
    assert math.isfinite(result.incumbent_value) and len(result.incumbent_point) == 2
    assert repr(result).startswith("RunResult(")

    print("smoke test passed")


if __name__ == "__main__":
    main()
