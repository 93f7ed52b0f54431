"""Low-rate zombies hide inside normal volume but not inside the flow count."""

from __future__ import annotations

from ddosguard import DetectorConfig
from ddosguard.detector import volume_only_config
from ddosguard.evaluation import low_rate_family, score_suite_run, simulate_suite


def main() -> None:
    runs = simulate_suite([low_rate_family(runs=5)])
    for label, cfg in [("volume only", volume_only_config(6)), ("volume + flow", DetectorConfig.uniform(6))]:
        detected = sum(score_suite_run(run, cfg).d for run in runs)
        print(f"{label:14s} detects {detected}/{len(runs)} low-rate attacks")

    run = runs[0]
    tr = run.trace
    i = tr.truth.index(True) + 5
    w = tr.victim_windows[i]
    mv, mf = run.profile.means
    sv, sf = run.profile.std_devs
    print(f"during the attack: volume {(w.volume_bytes - mv) / sv:+.1f} sigma, "
          f"flows {(w.flow_count - mf) / sf:+.1f} sigma")


if __name__ == "__main__":
    main()
