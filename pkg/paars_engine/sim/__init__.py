from .harness import CheckResult, MovementKind, SimConfig, SimReport, load_sim_config, run, verify
from .transport import HttpTransport, InProcessTransport

__all__ = [
    "CheckResult",
    "HttpTransport",
    "InProcessTransport",
    "MovementKind",
    "SimConfig",
    "SimReport",
    "load_sim_config",
    "run",
    "verify",
]
