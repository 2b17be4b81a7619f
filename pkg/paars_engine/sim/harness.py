"""
Deterministic agent-based harness.

Agents move on the grid, tick their devices every epoch against a service
instance, seeded infections share their diagnosis, and every agent finally
queries its own exposure. The report pairs what the service produced with
ground truth recomputed from positions alone.
"""

import logging
import math
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import Settings, load_settings, parse_config_file
from ..client.device import UserDevice
from ..contactstore.store import ContactStatus
from ..environment.grid import BlockId, access_point_for, build_access_points, build_grid
from ..environment.netkey import EpochClock, KeySchedule
from ..epi.models import ExposureModel, SheddingModel
from ..exceptions import ConfigError, DataValidationError, TransportError, handle_exception, log_operation
from . import audit
from .oracle import colocations, contact_runs, expected_row_values, expected_user_probability, noise_variance
from .transport import InProcessTransport

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]
_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))
NOISE_TRIALS = 4000


class MovementKind(str, Enum):
    RANDOM_WALK = "RandomWalk"
    STATIONARY = "Stationary"
    SCRIPTED = "Scripted"


def _parse_pairs(value):
    """Accept "a:b, c:d" from flat config files"""
    if isinstance(value, str):
        pairs = []
        for item in value.split(","):
            if item.strip():
                left, _, right = item.partition(":")
                pairs.append((int(left), int(right)))
        return pairs
    return value


class SimConfig(BaseModel):
    """Simulation scenario; system parameters go in `system` as configuration keys"""

    model_config = ConfigDict(extra="forbid")

    n_users: int = Field(10, ge=1, description="Number of agents")
    n_epochs: int = Field(20, ge=1, description="Number of epochs to simulate")
    movement: MovementKind = Field(MovementKind.RANDOM_WALK, description="Mobility model")
    seed: int = Field(0, ge=0, lt=2 ** 64, description="Master seed")
    infection_seeds: List[Tuple[int, int]] = Field(default_factory=list, description="(user, onset epoch)")
    report_probability: float = Field(1.0, ge=0.0, le=1.0, description="Chance an infected agent shares")
    alpha: float = Field(0.1, ge=0.0, description="Laplace noise parameter; 0 disables noise")
    drop_ingests: List[Tuple[int, int]] = Field(default_factory=list, description="(user, epoch) uploads to drop")
    start_cells: Optional[List[Tuple[int, int]]] = Field(None, description="(column, row) per agent")
    script: Dict[int, List[Tuple[int, int]]] = Field(default_factory=dict, description="Per-agent cell path")
    run_queries: bool = Field(True, description="Run the PSI exposure query for every agent")
    system: Dict[str, Any] = Field(default_factory=dict, description="Service configuration overrides")

    @field_validator("infection_seeds", "drop_ingests", "start_cells", mode="before")
    @classmethod
    def parse_pairs(cls, v):
        return _parse_pairs(v)

    @model_validator(mode="after")
    def check_indices(self):
        for user, onset in self.infection_seeds:
            if not 0 <= user < self.n_users:
                raise ValueError(f"infection seed user {user} outside 0..{self.n_users - 1}")
            if onset < 0:
                raise ValueError("onset epoch must be non-negative")
        for user, _ in self.drop_ingests:
            if not 0 <= user < self.n_users:
                raise ValueError(f"dropped ingest user {user} outside 0..{self.n_users - 1}")
        if self.start_cells is not None and len(self.start_cells) != self.n_users:
            raise ValueError("start_cells needs one cell per agent")
        if self.movement is MovementKind.SCRIPTED and not self.script:
            raise ValueError("Scripted movement needs a script")
        if any(not 0 <= u < self.n_users or not path for u, path in self.script.items()):
            raise ValueError("script keys must be agent indices with a non-empty path")
        return self


class ContactOut(BaseModel):
    epoch: int
    a: int
    b: int
    block: Optional[int] = None


class ContactRunOut(BaseModel):
    a: int
    b: int
    start: int
    length: int


class OccupancyPoint(BaseModel):
    epoch: int
    truth_total: int
    truth_per_ap: Dict[str, int]
    server_total: int
    server_per_ap: Dict[str, int]


class UserOutcome(BaseModel):
    user: int
    probability: float = Field(..., description="Device estimate from noisy stored scores")
    oracle_probability: float = Field(..., description="Noiseless estimate over the same events")
    noise_variance: float = Field(..., description="Measured variance of probability - oracle_probability")
    n_events: int
    alert: bool
    involved: bool
    flagged_rows: int = Field(..., description="Server rows of this agent not in N/A")
    scored_epochs: List[Tuple[int, float]] = Field(default_factory=list)


class DiagnosisRecord(BaseModel):
    user: int
    onset_epoch: int
    shared: bool
    applied: bool = False
    updated: int = 0
    peers_scored: int = 0
    error_code: Optional[str] = None


class SimReport(BaseModel):
    config: SimConfig
    alpha: float
    ground_truth_contacts: List[ContactOut]
    contact_runs: List[ContactRunOut]
    server_contacts: List[ContactOut]
    occupancy: List[OccupancyPoint]
    users: List[UserOutcome]
    diagnoses: List[DiagnosisRecord]
    audit_findings: List[Dict[str, str]]

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


def agent_label(user: int) -> str:
    """The simulator's persistent agent id; must never reach the wire"""
    return f"agent-{user:04d}"


def load_sim_config(path) -> SimConfig:
    """JSON document, or flat `sim.*` keys with everything else passed to the service"""
    path = Path(path)
    if path.suffix == ".json":
        try:
            return SimConfig.model_validate_json(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"Cannot read simulation config {path}: {e}") from e

    values: Dict[str, Any] = {}
    system: Dict[str, Any] = {}
    for key, value in parse_config_file(path).items():
        if key.startswith("SIM_"):
            values[key[len("SIM_"):].lower()] = value
        else:
            system[key] = value
    values["system"] = system
    return SimConfig.model_validate(values)


def system_settings(config: SimConfig, store_path: Path, codes: List[str]) -> Settings:
    overrides = {k.replace(".", "_").upper(): v for k, v in config.system.items()}
    overrides.update(
        EPI_ALPHA=config.alpha,
        EPI_NOISE_SEED=None,
        STORE_PATH=str(store_path),
        REGISTRY_CODES=",".join(codes),
    )
    return load_settings(None, **overrides)


def trajectories(config: SimConfig, width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """(users, epochs, 2) array of (column, row) cells"""
    n, T = config.n_users, config.n_epochs
    cells = np.zeros((n, T, 2), dtype=np.int64)
    if config.start_cells is not None:
        cells[:, 0] = np.asarray(config.start_cells, dtype=np.int64)
    else:
        cells[:, 0, 0] = rng.integers(0, width, n)
        cells[:, 0, 1] = rng.integers(0, height, n)

    for epoch in range(1, T):
        cells[:, epoch] = cells[:, epoch - 1]
        if config.movement is MovementKind.RANDOM_WALK:
            steps = rng.integers(0, len(_STEPS), n)
            for u in range(n):
                dx, dy = _STEPS[steps[u]]
                col, row = cells[u, epoch - 1]
                # reflect at the boundary
                if not 0 <= col + dx < width:
                    dx = -dx
                if not 0 <= row + dy < height:
                    dy = -dy
                cells[u, epoch] = (min(max(col + dx, 0), width - 1), min(max(row + dy, 0), height - 1))

    if config.movement is MovementKind.SCRIPTED:
        for u, path in config.script.items():
            for epoch in range(T):
                cells[u, epoch] = path[min(epoch, len(path) - 1)]

    if (cells[..., 0] < 0).any() or (cells[..., 0] >= width).any() or (cells[..., 1] < 0).any() or (cells[..., 1] >= height).any():
        raise DataValidationError("Simulation path leaves the grid", {'width': width, 'height': height})
    return cells


@handle_exception
def run(config: SimConfig, transport=None) -> SimReport:
    """
    Run one scenario end to end.

    Without a transport an in-process service is built from `config.system`
    with a noise generator derived from the master seed, which makes the
    report a pure function of the config.
    """
    streams = np.random.SeedSequence(config.seed).spawn(config.n_users + 4)
    movement_rng, decision_rng, noise_rng = (np.random.default_rng(s) for s in streams[:3])
    device_rngs = [np.random.default_rng(s) for s in streams[3:3 + config.n_users]]
    variance_rng = np.random.default_rng(streams[-1])
    codes = [decision_rng.bytes(8).hex() for _ in config.infection_seeds]

    with tempfile.TemporaryDirectory(prefix="paars-sim-") as workdir:
        cfg = system_settings(config, Path(workdir) / "contacts.ndjson", codes)
        owned = transport is None
        if owned:
            transport = InProcessTransport(cfg, noise_rng)
        try:
            return _run(config, cfg, transport, decision_rng, device_rngs, movement_rng, variance_rng, codes)
        finally:
            if owned:
                transport.close()


def _run(config, cfg, transport, decision_rng, device_rngs, movement_rng, variance_rng, codes) -> SimReport:
    grid = build_grid((cfg.GRID_ORIGIN_X, cfg.GRID_ORIGIN_Y), cfg.GRID_CELL_SIZE_M, cfg.GRID_WIDTH, cfg.GRID_HEIGHT)
    access_points = build_access_points(grid, cfg.GRID_ACCESS_POINTS, cfg.seed_bytes)
    clock = EpochClock(cfg.EPOCH_TAU_SECONDS, cfg.EPOCH_T0)
    schedule = KeySchedule(cfg.seed_bytes, clock)

    cells = trajectories(config, grid.width_cells, grid.height_cells, movement_rng)
    blocks = cells[..., 1] * grid.width_cells + cells[..., 0]
    ap_of_block = {b: access_point_for(access_points, BlockId(b)).ap_id for b in np.unique(blocks).tolist()}

    devices = [UserDevice(grid, rng, alert_threshold=cfg.ALERT_THRESHOLD) for rng in device_rngs]
    dropped = set(map(tuple, config.drop_ingests))
    status = transport.health()
    logger.info(f"Service {status['status']} with {status['rows']} stored rows")

    for epoch in range(config.n_epochs):
        key = schedule.for_epoch(epoch)
        for u, device in enumerate(devices):
            block = BlockId(int(blocks[u, epoch]))
            ap = access_points[ap_of_block[block.value]]
            record = device.tick(grid.center_of(block), key, ap)
            if (u, epoch) not in dropped:
                transport.ingest(record, ap.ap_id)
    log_operation("sim_ticks", {"users": config.n_users, "epochs": config.n_epochs, "dropped": len(dropped)})

    diagnoses, applied = [], []
    for (u, onset), code in zip(config.infection_seeds, codes):
        if decision_rng.random() >= config.report_probability:
            diagnoses.append(DiagnosisRecord(user=u, onset_epoch=onset, shared=False))
            continue
        entry = DiagnosisRecord(user=u, onset_epoch=onset, shared=True)
        try:
            response = transport.diagnosis(devices[u].share_diagnosis(code, onset))
            entry.applied, entry.updated, entry.peers_scored = True, response["updated"], response["peers_scored"]
            applied.append((u, onset))
        except TransportError as e:
            entry.error_code = e.error_code
        diagnoses.append(entry)

    results = [_query(device, transport) if config.run_queries else None for device in devices]

    # server-side view
    owner = {(r.rand, r.epoch): u for u, d in enumerate(devices) for r in d.ledger}
    rows = transport.server_rows()
    by_token: Dict[bytes, List[int]] = {}
    flagged = [0] * config.n_users
    store_records: Dict[str, list] = {}
    for row in rows:
        u = owner.get((row.rand, row.epoch))
        if u is None:
            continue
        by_token.setdefault(row.token.digest, []).append(u)
        if row.status is not ContactStatus.NOT_APPLICABLE:
            flagged[u] += 1
        store_records.setdefault(f"store:{agent_label(u)}", []).append(row)

    server_contacts = set()
    epoch_of_token = {row.token.digest: row.epoch for row in rows}
    for digest, users in by_token.items():
        users = sorted(users)
        for i, a in enumerate(users):
            for b in users[i + 1:]:
                server_contacts.add((epoch_of_token[digest], a, b))

    truth = colocations(blocks)
    runs = contact_runs(truth)

    occupancy = []
    for epoch in range(config.n_epochs):
        truth_per_ap: Dict[str, int] = {}
        for u in range(config.n_users):
            label = str(ap_of_block[int(blocks[u, epoch])])
            truth_per_ap[label] = truth_per_ap.get(label, 0) + 1
        server = transport.occupancy(epoch, epoch)
        occupancy.append(OccupancyPoint(
            epoch=epoch,
            truth_total=config.n_users,
            truth_per_ap=dict(sorted(truth_per_ap.items())),
            server_total=server["total"],
            server_per_ap=server["per_ap"],
        ))

    oracle = expected_row_values(
        blocks, applied, grid.cell_size_m, clock.tau_seconds,
        ExposureModel.from_settings(cfg), SheddingModel.from_settings(cfg),
    )
    involved = oracle.involved_users()
    users = []
    for u, result in enumerate(results):
        scored = result.scored_epochs if result is not None else []
        users.append(UserOutcome(
            user=u,
            probability=result.probability if result is not None else 0.0,
            oracle_probability=expected_user_probability(scored, u, oracle),
            noise_variance=noise_variance(scored, u, oracle, config.alpha, NOISE_TRIALS, variance_rng),
            n_events=result.n_events if result is not None else 0,
            alert=result.alert if result is not None else False,
            involved=u in involved,
            flagged_rows=flagged[u],
            scored_epochs=scored,
        ))

    findings = _audit(devices, transport, store_records)

    report = SimReport(
        config=config,
        alpha=config.alpha,
        ground_truth_contacts=[ContactOut(epoch=c.epoch, a=c.a, b=c.b, block=c.block) for c in truth],
        contact_runs=[ContactRunOut(a=a, b=b, start=s, length=n) for (a, b), rs in sorted(runs.items()) for s, n in rs],
        server_contacts=[ContactOut(epoch=e, a=a, b=b) for e, a, b in sorted(server_contacts)],
        occupancy=occupancy,
        users=users,
        diagnoses=diagnoses,
        audit_findings=[f.to_dict() for f in findings],
    )
    log_operation("sim_run", {"contacts": len(truth), "applied_reports": len(applied), "findings": len(findings)})
    return report


def _query(device, transport):
    try:
        return device.query_scores(transport)
    except TransportError as e:
        # a dropped upload leaves a PSI match without its (token, rand) row
        logger.warning(f"Exposure query failed: {e.error_code}")
        return None


def _audit(devices, transport, store_records) -> List[audit.Finding]:
    client_records = {agent_label(u): list(d.ledger) for u, d in enumerate(devices)}
    store_bytes = transport.store_bytes()
    blobs = audit.transcript_blobs(transport.transcript) + [store_bytes]
    tokens = [r.token for records in client_records.values() for r in records]

    findings = audit.constant_byte_findings(client_records)
    findings += audit.constant_byte_findings(store_records)
    findings += audit.store_schema_findings(store_bytes)
    findings += audit.substring_findings(blobs, {label: label.encode() for label in client_records}, "agent_id")
    findings += audit.psi_transcript_findings(transport.transcript, tokens)
    return findings


def verify(report: SimReport) -> List[CheckResult]:
    """Compare the service's outcome with ground truth; failures are results, never exceptions"""
    checks = []

    truth = {(c.epoch, c.a, c.b) for c in report.ground_truth_contacts}
    server = {(c.epoch, c.a, c.b) for c in report.server_contacts}
    missing, extra = sorted(truth - server), sorted(server - truth)
    detail = "; ".join(
        [f"missing epoch {e} users ({a}, {b})" for e, a, b in missing[:5]]
        + [f"unexpected epoch {e} users ({a}, {b})" for e, a, b in extra[:5]]
    )
    checks.append(CheckResult(name="contacts", passed=not missing and not extra,
                              detail=detail or f"{len(truth)} contacts match"))

    wrong = [p.epoch for p in report.occupancy
             if p.truth_total != p.server_total or p.truth_per_ap != p.server_per_ap]
    checks.append(CheckResult(name="occupancy", passed=not wrong,
                              detail=f"mismatch at epochs {wrong[:10]}" if wrong else f"{len(report.occupancy)} epochs match"))

    checks.append(_noise_check(report))

    leaked = [u.user for u in report.users
              if not u.involved and (u.n_events or u.probability != 0.0 or u.flagged_rows)]
    checks.append(CheckResult(name="uninvolved", passed=not leaked,
                              detail=f"scored uninvolved users {leaked[:10]}" if leaked else "no uninvolved user scored"))

    checks.append(CheckResult(name="privacy_audit", passed=not report.audit_findings,
                              detail=f"{len(report.audit_findings)} findings"))
    return checks


def _noise_check(report: SimReport) -> CheckResult:
    scored = [u for u in report.users if u.n_events]
    if not scored:
        return CheckResult(name="noise", passed=True, detail="no scored users")
    diffs = [u.probability - u.oracle_probability for u in scored]

    if report.alpha == 0:
        off = [u.user for u, d in zip(scored, diffs) if d != 0.0]
        return CheckResult(name="noise", passed=not off,
                           detail=f"inexact users {off[:10]}" if off else "exact match with noise off")

    observed = sum(d * d for d in diffs)
    expected = sum(u.noise_variance for u in scored)
    # std of a squared Laplace draw is sqrt(5) times its mean; summed stds bound any correlation
    threshold = expected + 3 * math.sqrt(5) * expected
    return CheckResult(
        name="noise",
        passed=observed <= threshold,
        detail=f"sum sq error {observed:.6g} vs bound {threshold:.6g} over {len(scored)} users",
    )
