"""Edge detectors raise alarms and the central detector confirms them."""

from __future__ import annotations

from collections import Counter

from ddosguard.coop import CoopConfig, run_coop_simulation, train_coop_profiles
from ddosguard.evaluation import high_rate_family, low_rate_family, simulate_run


def show(family) -> None:
    run = simulate_run(family.topology, family.scenario, seed=2)
    profiles = train_coop_profiles(run.training)
    result = run_coop_simulation(run.trace, CoopConfig(), profiles)
    rep = result.report
    kinds = Counter(m["type"] for m in result.messages)
    print(f"{family.name}: {len(profiles.edges)} edges, quorum {CoopConfig().quorum(len(profiles.edges))}")
    print(f"  first confirmation at window {rep.first_confirmation_window}"
          f" (attack starts in window {run.trace.truth.index(True) + 1})")
    print(f"  confirmations by path: {dict(rep.confirmations)}")
    print(f"  messages: {dict(kinds)}")


def main() -> None:
    show(high_rate_family())
    show(low_rate_family())


if __name__ == "__main__":
    main()
