"""Sweep the tolerance factor over a small mixed suite and print the ROC table."""

from __future__ import annotations

from ddosguard.evaluation import mixed_families, roc_sweep, simulate_suite


def main() -> None:
    runs = simulate_suite(mixed_families(total=9))
    points, _ = roc_sweep(runs, range(1, 13))
    print("  r    R_d    R_fp")
    for p in points:
        print(f"{p.r:3.0f}  {p.R_d:5.2f}  {p.R_fp:6.4f}")


if __name__ == "__main__":
    main()
