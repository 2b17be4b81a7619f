import argparse
import logging
import sys
import time
from datetime import datetime, timezone
from typing import Dict, List, Optional

import numpy as np
import uvicorn
from fastapi import Body, FastAPI, Query, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from config import Settings, configure_logging, get_settings, load_settings
from paars_engine.client.ledger import DiagnosisReport
from paars_engine.client.token import ClientRecord, Token, parse_rand
from paars_engine.contactstore import ContactStore, VerificationRegistry, reconstruct_events
from paars_engine.environment import EpochClock, build_access_points, build_grid, epoch_of
from paars_engine.epi import (
    DpParams,
    ExposureModel,
    SheddingModel,
    expected_error,
    measure_pipeline_variance,
    privacy_epsilon,
    score_events,
)
from paars_engine.exceptions import BeforeReferenceError, PaarsError, log_operation
from paars_engine.psi import PsiServer, decode_element, encode_element, score_request

logger = logging.getLogger(__name__)

TOKEN_PATTERN = r"^[0-9a-f]{64}$"
RAND_PATTERN = r"^[0-9]{1,20}$"
PRIVACY_TRIALS = 20000


# --- wire models -------------------------------------------------------------

class RecordIn(BaseModel):
    """One per-epoch upload; carries nothing that identifies the device"""
    token: str = Field(..., pattern=TOKEN_PATTERN, description="SHA-256 token, lowercase hex")
    rand: str = Field(..., pattern=RAND_PATTERN, description="Per-epoch 64-bit random value, decimal")
    epoch: int = Field(..., description="Epoch index")
    ap_id: Optional[int] = Field(None, ge=0, description="Access point that served the upload")


class RecordResponse(BaseModel):
    stored: bool = Field(..., description="Row ingested")
    epoch: int = Field(..., description="Epoch of the stored row")


class EntryIn(BaseModel):
    token: str = Field(..., pattern=TOKEN_PATTERN)
    rand: str = Field(..., pattern=RAND_PATTERN)
    epoch: int


class DiagnosisIn(BaseModel):
    code: str = Field(..., min_length=1, description="Single-use verification code")
    onset_epoch: int = Field(..., description="User-supplied epoch of symptom onset")
    entries: List[EntryIn] = Field(..., min_length=1, description="Shared (token, rand, epoch) records")


class DiagnosisResponse(BaseModel):
    updated: int = Field(..., description="Reporter rows marked infected")
    peers_scored: int = Field(..., description="Peer rows that received a probability")


class PsiRound1Response(BaseModel):
    client: List[str] = Field(..., description="Doubly-blinded client items, request order")
    server: List[str] = Field(..., description="Blinded server set, shuffled")


class PairIn(BaseModel):
    token: str = Field(..., pattern=TOKEN_PATTERN)
    rand: str = Field(..., pattern=RAND_PATTERN)


class ScoreOut(BaseModel):
    token: str
    rand: str
    p: float


class OccupancyResponse(BaseModel):
    from_epoch: int = Field(..., alias="from")
    to_epoch: int = Field(..., alias="to")
    per_ap: Dict[str, int] = Field(..., description="Distinct rands per access point")
    total: int = Field(..., description="Distinct rands in the window")
    peak: int = Field(..., description="Largest single-epoch count in the window")
    threshold: int = Field(..., description="Effective occupancy threshold")
    alert: bool = Field(..., description="total exceeds threshold")

    model_config = {"populate_by_name": True}


class PrivacyResponse(BaseModel):
    alpha: float
    n_events: int
    epsilon_per_event: Optional[float] = Field(None, description="N / alpha; null when noise is off")
    expected_error: Optional[float] = Field(None, description="Stated error 2 alpha^2 / N^2")
    measured_variance: Optional[float] = Field(None, description="Monte-Carlo variance of the per-user mean")


class HealthResponse(BaseModel):
    """Health check response"""
    status: str = Field(..., description="Service status")
    service: str = Field(..., description="Service name")
    version: str = Field(..., description="API version")
    environment: str = Field(..., description="Environment")
    rows: int = Field(..., description="Rows in the contact store")
    current_epoch: Optional[int] = Field(None, description="Epoch of the service clock")
    timestamp: str = Field(..., description="Current timestamp")


# --- service state -----------------------------------------------------------

class PaarsService:
    """Everything one deployment holds: store, registry, PSI server and models"""

    def __init__(self, cfg: Settings, rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        self.grid = build_grid((cfg.GRID_ORIGIN_X, cfg.GRID_ORIGIN_Y), cfg.GRID_CELL_SIZE_M, cfg.GRID_WIDTH, cfg.GRID_HEIGHT)
        self.access_points = build_access_points(self.grid, cfg.GRID_ACCESS_POINTS, cfg.seed_bytes)
        self.clock = EpochClock(cfg.EPOCH_TAU_SECONDS, cfg.EPOCH_T0)
        self.store = ContactStore(cfg.STORE_PATH or None, cfg.effective_occupancy_threshold)
        self.registry = VerificationRegistry(cfg.registry_code_list)
        self.psi = PsiServer(self.store)
        self.exposure = ExposureModel.from_settings(cfg)
        self.shedding = SheddingModel.from_settings(cfg)
        self.dp = DpParams(cfg.EPI_ALPHA)
        self.rng = rng if rng is not None else np.random.default_rng(cfg.EPI_NOISE_SEED)

    def current_epoch(self) -> int:
        return epoch_of(self.clock, time.time())

    def diagnose(self, report: DiagnosisReport) -> DiagnosisResponse:
        """Verify, mark, score and commit as one transaction"""
        with self.store.transaction() as txn:
            outcome = self.store.apply_diagnosis(report, self.registry)
            peers_scored = 0
            if outcome.peer_rows:
                events = reconstruct_events(
                    outcome.peer_rows,
                    outcome.reporter_rands,
                    report.onset_epoch,
                    self.grid.cell_size_m,
                    self.clock.tau_seconds,
                )
                scores = score_events(events, self.exposure, self.shedding, self.dp, self.rng)
                peers_scored = self.store.record_scores(outcome.peer_rows, scores.by_rand)
            txn.on_commit.append(self.psi.rotate)

        log_operation("diagnosis", {"updated": outcome.updated, "peers_scored": peers_scored})
        return DiagnosisResponse(updated=outcome.updated, peers_scored=peers_scored)


def _error_body(message: str, error_code: str, details, timestamp: datetime, kind: str) -> Dict:
    return {
        "error": message,
        "error_code": error_code,
        "details": details,
        "timestamp": timestamp.isoformat(),
        "type": kind,
    }


def _occupancy_response(report) -> OccupancyResponse:
    return OccupancyResponse(
        from_epoch=report.from_epoch,
        to_epoch=report.to_epoch,
        per_ap=report.per_ap,
        total=report.total,
        peak=report.peak,
        threshold=report.threshold,
        alert=report.alert,
    )


def create_app(cfg: Optional[Settings] = None, rng: Optional[np.random.Generator] = None) -> FastAPI:
    cfg = cfg or get_settings()
    service = PaarsService(cfg, rng)

    app = FastAPI(
        title=cfg.API_TITLE,
        description="""
    PAARS - privacy-aware access regulation and contact detection

    Co-located devices derive the same token from the broadcast network key,
    the server links uploads only through those tokens, and users retrieve
    their own scores through private set intersection.

    ## Endpoints
    - **Records**: per-epoch (token, rand) uploads
    - **Diagnosis**: verified, voluntary sharing of a positive user's records
    - **PSI / Scores**: private lookup of a user's own contact probabilities
    - **Occupancy**: distinct devices per access point over an epoch window
    """,
        version=cfg.API_VERSION,
        docs_url="/docs",
        redoc_url="/redoc",
    )
    app.state.service = service

    @app.exception_handler(PaarsError)
    async def paars_exception_handler(request: Request, exc: PaarsError):
        """Handle PAARS-specific exceptions"""
        logger.error(f"PAARS error: {exc.message}", extra={
            "error_code": exc.error_code,
            "path": request.url.path
        })
        return JSONResponse(
            status_code=exc.http_status,
            content=_error_body(exc.message, exc.error_code, exc.details, exc.timestamp, "PAARS Error"),
        )

    @app.exception_handler(RequestValidationError)
    async def validation_exception_handler(request: Request, exc: RequestValidationError):
        # field locations only; submitted values may be tokens
        fields = [".".join(str(p) for p in err.get("loc", ())) for err in exc.errors()]
        logger.warning(f"Malformed request to {request.url.path}: {fields}")
        return JSONResponse(
            status_code=status.HTTP_400_BAD_REQUEST,
            content=_error_body("Malformed request", "MALFORMED_REQUEST", {"fields": fields},
                                datetime.now(timezone.utc), "Validation Error"),
        )

    @app.get("/health", response_model=HealthResponse)
    async def health_check():
        """Health check endpoint for load balancer and monitoring"""
        try:
            current = service.current_epoch()
        except BeforeReferenceError:
            current = None
        return HealthResponse(
            status="healthy",
            service="PAARS",
            version=cfg.API_VERSION,
            environment=cfg.ENVIRONMENT,
            rows=len(service.store),
            current_epoch=current,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )

    @app.post("/v1/records", response_model=RecordResponse, status_code=status.HTTP_201_CREATED)
    def upload_record(body: RecordIn):
        """Ingest one (token, rand, epoch) upload as a {N/A, 0} row"""
        row = service.store.ingest(Token.from_hex(body.token), parse_rand(body.rand), body.epoch, body.ap_id)
        return RecordResponse(stored=True, epoch=row.epoch)

    @app.post("/v1/diagnosis", response_model=DiagnosisResponse)
    def submit_diagnosis(body: DiagnosisIn):
        """
        Voluntary diagnosis upload.

        The code is checked with the verification registry before anything
        changes; on success the reporter's rows become infected, every
        co-located peer row is scored, and the code is consumed.
        """
        entries = tuple(
            ClientRecord(Token.from_hex(e.token), parse_rand(e.rand), e.epoch) for e in body.entries
        )
        return service.diagnose(DiagnosisReport(body.code, body.onset_epoch, entries))

    @app.post("/v1/psi/round1", response_model=PsiRound1Response)
    def psi_round1(items: List[str] = Body(..., min_length=1)):
        blinded = [decode_element(v) for v in items]
        doubly, server_set = service.psi.round(blinded)
        return PsiRound1Response(
            client=[encode_element(y) for y in doubly],
            server=[encode_element(y) for y in server_set],
        )

    @app.post("/v1/scores", response_model=List[ScoreOut])
    def scores(pairs: List[PairIn] = Body(..., min_length=1)):
        """Probabilities for the caller's own (token, rand) pairs; rows of other rands stay hidden"""
        results = score_request(service.store, [(Token.from_hex(p.token), parse_rand(p.rand)) for p in pairs])
        return [ScoreOut(token=r.token.hex, rand=str(r.rand), p=r.probability) for r in results]

    @app.get("/v1/occupancy", response_model=OccupancyResponse, response_model_by_alias=True)
    def occupancy(from_epoch: int = Query(..., alias="from"), to_epoch: int = Query(..., alias="to")):
        return _occupancy_response(service.store.occupancy(from_epoch, to_epoch))

    @app.get("/v1/occupancy/current", response_model=OccupancyResponse, response_model_by_alias=True)
    def occupancy_current():
        epoch = service.current_epoch()
        return _occupancy_response(service.store.occupancy(epoch, epoch))

    @app.get("/v1/privacy", response_model=PrivacyResponse)
    def privacy(n: int = Query(1, ge=1, description="Events in a diagnosis batch")):
        """Privacy accounting for the configured alpha"""
        alpha = service.dp.alpha
        if not service.dp.enabled:
            return PrivacyResponse(alpha=alpha, n_events=n)
        return PrivacyResponse(
            alpha=alpha,
            n_events=n,
            epsilon_per_event=privacy_epsilon(alpha, n),
            expected_error=expected_error(alpha, n),
            measured_variance=measure_pipeline_variance(alpha, n, PRIVACY_TRIALS, np.random.default_rng(n)),
        )

    logger.info(f"PAARS service ready: {service.grid.n_blocks} blocks, {len(service.access_points)} access points")
    return app


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="paars-server", description="PAARS contact detection service")
    parser.add_argument("--config", help="Flat key = value configuration file")
    parser.add_argument("--bind", help="host:port override")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        cfg = load_settings(args.config)
        host, port = cfg.HOST, cfg.PORT
        if args.bind:
            host, _, port_text = args.bind.rpartition(":")
            port = int(port_text)
            host = host or cfg.HOST
        configure_logging(cfg)
        application = create_app(cfg)
    except (PaarsError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2

    logger.info(f"Starting PAARS on {host}:{port}")
    uvicorn.run(application, host=host, port=port, log_level=cfg.LOG_LEVEL.lower())
    return 0


if __name__ == "__main__":
    sys.exit(main())
