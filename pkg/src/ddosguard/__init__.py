"""Volume/flow threshold DDoS detection with a flow-level traffic simulator."""

__version__ = "0.1.0"

from .flow_model import (
    FlowRecord,
    WindowingConfig,
    WindowStats,
    aggregate_measure,
    window_partition,
)
from .detector import (
    DetectionReport,
    DetectorConfig,
    NormalProfile,
    Thresholds,
    Verdict,
    build_profile,
    compute_thresholds,
    detect_stream,
    detect_window,
)
from .simulator import (
    LabeledTrace,
    ScenarioSpec,
    Topology,
    TopologySpec,
    build_topology,
    overwhelm_time,
    run_scenario,
)
from .coop import (
    CentralVerdict,
    CoopConfig,
    SuspiciousAlarm,
    central_step,
    local_detect,
    merge_flow_lists,
    run_coop_simulation,
)
from .evaluation import EvalReport, RocPoint, roc_sweep, score_run, window_eval_mode
