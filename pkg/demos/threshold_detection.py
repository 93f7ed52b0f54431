"""Learn a normal profile, then watch a high-rate flood cross the threshold.

Run with ``python3 demos/threshold_detection.py``.
"""

from __future__ import annotations

from ddosguard import DetectorConfig, detect_stream
from ddosguard.evaluation import high_rate_family, simulate_run


def main() -> None:
    fam = high_rate_family()
    run = simulate_run(fam.topology, fam.scenario, seed=1)
    p = run.profile
    print(f"normal volume {p.means[0] / 1e6:.2f} MB per window (sigma {p.std_devs[0] / 1e3:.0f} KB)")
    print(f"normal flow count {p.means[1]:.1f} (sigma {p.std_devs[1]:.1f})")

    report = detect_stream(run.trace.victim_windows, p, DetectorConfig.uniform(6))
    tr = run.trace
    print(f"attack starts at {tr.t_a_ms:.0f} ms, victim is overwhelmed at {tr.t_b_ms:.0f} ms")
    print(f"first alarm at the end of window {report.first_detection_window} "
          f"({report.detection_time_ms:.0f} ms)")

    # a few windows around the onset
    first = int(tr.t_a_ms // tr.delta_ms) - 2
    for w, v in zip(tr.victim_windows[first:first + 6], report.verdicts[first:first + 6]):
        flag = "ALARM" if v.is_attack else "quiet"
        print(f"  window {w.window_index:4d}  {w.volume_bytes / 1e6:6.2f} MB  {w.flow_count:4d} flows  {flag}")


if __name__ == "__main__":
    main()
