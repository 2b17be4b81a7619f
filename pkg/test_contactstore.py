"""
Tests for the contact store, the verification registry and event reconstruction
"""

import json
import threading

import pytest

from conftest import TABLE_RAND_PEER, TABLE_RAND_REPORTER
from paars_engine.client.ledger import DiagnosisReport
from paars_engine.client.token import ClientRecord, Token
from paars_engine.contactstore import (
    ContactStatus,
    ContactStore,
    VerificationRegistry,
    reconstruct_events,
)
from paars_engine.contactstore.store import UNATTRIBUTED_AP
from paars_engine.exceptions import (
    DataValidationError,
    DuplicateRowError,
    EmptyEventsError,
    NoMatchingRowsError,
    UnknownRowError,
    VerificationFailedError,
)


def tok(n: int) -> Token:
    return Token(n.to_bytes(32, "big"))


@pytest.fixture
def store(tmp_path):
    return ContactStore(tmp_path / "contacts.ndjson")


@pytest.fixture
def table_store(store, table_token):
    store.ingest(table_token, TABLE_RAND_PEER, 100, ap_id=0)
    store.ingest(table_token, TABLE_RAND_REPORTER, 100, ap_id=0)
    return store


class TestIngest:

    def test_new_row_is_na_zero(self, store, table_token):
        row = store.ingest(table_token, TABLE_RAND_PEER, 100)
        assert row.status is ContactStatus.NOT_APPLICABLE
        assert row.probability == 0.0

    def test_duplicate_triple(self, store, table_token):
        store.ingest(table_token, TABLE_RAND_PEER, 100)
        with pytest.raises(DuplicateRowError):
            store.ingest(table_token, TABLE_RAND_PEER, 100)
        assert len(store) == 1

    def test_same_token_different_rand(self, table_store, table_token):
        assert len(table_store.find_contacts(table_token)) == 2

    def test_unknown_token(self, table_store):
        assert table_store.find_contacts(tok(1)) == []

    def test_three_colocated_users(self, store):
        for rand in (11, 22, 33):
            store.ingest(tok(9), rand, 4)
        assert {r.rand for r in store.find_contacts(tok(9))} == {11, 22, 33}


class TestDiagnosisWorkflow:

    def test_table_transitions(self, table_store, table_token):
        registry = VerificationRegistry(["hx-1"])
        report = DiagnosisReport("hx-1", 100, (ClientRecord(table_token, TABLE_RAND_REPORTER, 100),))
        outcome = table_store.apply_diagnosis(report, registry)

        reporter = table_store.get(table_token, TABLE_RAND_REPORTER, 100)
        peer = table_store.get(table_token, TABLE_RAND_PEER, 100)
        assert (reporter.status, reporter.probability) == (ContactStatus.INFECTED, 1.0)
        assert peer.status is ContactStatus.TO_BE_DETERMINED
        assert outcome.updated == 1
        assert [r.rand for r in outcome.peer_rows] == [TABLE_RAND_PEER]
        assert outcome.reporter_rands == {100: TABLE_RAND_REPORTER}
        assert not registry.is_valid("hx-1")

    def test_other_rows_untouched(self, table_store, table_token):
        bystander = table_store.ingest(tok(2), 5, 100)
        registry = VerificationRegistry(["hx-1"])
        table_store.apply_diagnosis(
            DiagnosisReport("hx-1", 100, (ClientRecord(table_token, TABLE_RAND_REPORTER, 100),)), registry
        )
        assert table_store.get(tok(2), 5, 100) == bystander

    def test_invalid_code_mutates_nothing(self, table_store, table_token):
        before = table_store.rows()
        persisted = table_store.persisted_bytes()
        with pytest.raises(VerificationFailedError):
            table_store.apply_diagnosis(
                DiagnosisReport("forged", 100, (ClientRecord(table_token, TABLE_RAND_REPORTER, 100),)),
                VerificationRegistry(["hx-1"]),
            )
        assert table_store.rows() == before
        assert table_store.persisted_bytes() == persisted

    def test_no_matching_rows_keeps_code(self, table_store):
        registry = VerificationRegistry(["hx-1"])
        with pytest.raises(NoMatchingRowsError):
            table_store.apply_diagnosis(DiagnosisReport("hx-1", 0, (ClientRecord(tok(3), 1, 1),)), registry)
        assert registry.is_valid("hx-1")

    def test_code_is_single_use(self, table_store, table_token):
        registry = VerificationRegistry(["hx-1"])
        report = DiagnosisReport("hx-1", 100, (ClientRecord(table_token, TABLE_RAND_REPORTER, 100),))
        table_store.apply_diagnosis(report, registry)
        with pytest.raises(VerificationFailedError):
            table_store.apply_diagnosis(report, registry)

    def test_failure_inside_transaction_rolls_back(self, table_store, table_token):
        registry = VerificationRegistry(["hx-1"])
        before = table_store.rows()
        with pytest.raises(RuntimeError):
            with table_store.transaction():
                table_store.apply_diagnosis(
                    DiagnosisReport("hx-1", 100, (ClientRecord(table_token, TABLE_RAND_REPORTER, 100),)), registry
                )
                raise RuntimeError("scoring failed")
        assert table_store.rows() == before
        assert registry.is_valid("hx-1")


class TestVerificationRegistry:

    def test_verify_consumes_once(self):
        registry = VerificationRegistry(["hx-9"])
        assert registry.verify("hx-9") is True
        assert registry.verify("hx-9") is False
        assert not registry.is_valid("hx-9")
        assert len(registry) == 0

    def test_unknown_code(self):
        assert VerificationRegistry(["hx-9"]).verify("hx-8") is False


class TestRecordScores:

    def _pending(self, store, table_token):
        registry = VerificationRegistry(["hx-1"])
        outcome = store.apply_diagnosis(
            DiagnosisReport("hx-1", 100, (ClientRecord(table_token, TABLE_RAND_REPORTER, 100),)), registry
        )
        return outcome.peer_rows

    def test_scored(self, table_store, table_token):
        rows = self._pending(table_store, table_token)
        assert table_store.record_scores(rows, {TABLE_RAND_PEER: 0.42}) == 1
        peer = table_store.get(table_token, TABLE_RAND_PEER, 100)
        assert (peer.status, peer.probability) == (ContactStatus.SCORED, 0.42)

    def test_clamped_high(self, table_store, table_token):
        rows = self._pending(table_store, table_token)
        table_store.record_scores(rows, {TABLE_RAND_PEER: 1.3})
        assert table_store.get(table_token, TABLE_RAND_PEER, 100).probability == 1.0

    def test_clamped_low_excluded_from_positive_set(self, table_store, table_token):
        rows = self._pending(table_store, table_token)
        table_store.record_scores(rows, {TABLE_RAND_PEER: -0.1})
        peer = table_store.get(table_token, TABLE_RAND_PEER, 100)
        assert (peer.status, peer.probability) == (ContactStatus.NOT_APPLICABLE, 0.0)
        # the reporter's row keeps the token positive
        assert table_store.positive_tokens() == [table_token]

    def test_unknown_subject(self, table_store, table_token):
        rows = self._pending(table_store, table_token)
        with pytest.raises(UnknownRowError):
            table_store.record_scores(rows, {999: 0.5})
        assert table_store.get(table_token, TABLE_RAND_PEER, 100).status is ContactStatus.TO_BE_DETERMINED


class TestPersistence:

    def test_replay_restores_last_state(self, tmp_path, table_token):
        path = tmp_path / "contacts.ndjson"
        store = ContactStore(path)
        store.ingest(table_token, TABLE_RAND_PEER, 100, ap_id=1)
        store.ingest(table_token, TABLE_RAND_REPORTER, 100, ap_id=1)
        store.apply_diagnosis(
            DiagnosisReport("hx-1", 100, (ClientRecord(table_token, TABLE_RAND_REPORTER, 100),)),
            VerificationRegistry(["hx-1"]),
        )

        replayed = ContactStore(path)
        assert replayed.rows() == store.rows()
        # per-AP attribution is not persisted
        assert replayed.occupancy(100, 100).per_ap == {UNATTRIBUTED_AP: 2}

    def test_rows_have_exactly_five_fields(self, table_store):
        lines = table_store.persisted_bytes().decode().splitlines()
        assert len(lines) == 2
        for line in lines:
            data = json.loads(line)
            assert set(data) == {"token", "rand", "epoch", "status", "p"}
            assert isinstance(data["rand"], str)
            assert len(data["token"]) == 64
            assert data["status"] == "NA"

    def test_in_memory_store_writes_nothing(self, table_token):
        store = ContactStore(None)
        store.ingest(table_token, 1, 1)
        assert store.persisted_bytes() == b""


class TestOccupancy:

    def test_empty_window(self, store):
        report = store.occupancy(0, 10)
        assert report.total == 0
        assert report.alert is False

    def test_counts_distinct_rands_per_ap(self, store):
        for rand in range(10):
            store.ingest(tok(rand // 5), rand, 7, ap_id=rand % 2)
        report = store.occupancy(7, 7)
        assert report.total == 10
        assert report.per_ap == {"0": 5, "1": 5}
        assert report.peak == 10

    def test_alert_above_threshold(self):
        store = ContactStore(None, occupancy_threshold=50)
        for rand in range(51):
            store.ingest(tok(rand), rand, 3)
        assert store.occupancy(3, 3).alert is True

    def test_at_threshold_no_alert(self):
        store = ContactStore(None, occupancy_threshold=50)
        for rand in range(50):
            store.ingest(tok(rand), rand, 3)
        assert store.occupancy(3, 3).alert is False

    def test_bad_window(self, store):
        with pytest.raises(DataValidationError):
            store.occupancy(5, 4)

    def test_huge_window_only_visits_stored_epochs(self, store):
        store.ingest(tok(1), 1, 3)
        store.ingest(tok(2), 2, 10 ** 11)
        finished = []
        reader = threading.Thread(target=lambda: finished.append(store.occupancy(0, 10 ** 12)))
        reader.start()
        reader.join(5)
        assert not reader.is_alive()
        assert finished[0].total == 2

    def test_writer_proceeds_alongside_occupancy_reads(self, store):
        stop = threading.Event()

        def read_loop():
            while not stop.is_set():
                store.occupancy(0, 10 ** 12)

        reader = threading.Thread(target=read_loop)
        reader.start()
        try:
            for rand in range(20):
                store.ingest(tok(rand), rand, rand)
        finally:
            stop.set()
            reader.join(5)
        assert not reader.is_alive()
        assert store.occupancy(0, 19).total == 20


class TestReconstructEvents:

    def _rows(self, store, epochs, rand_base=1000):
        rows = []
        for e in epochs:
            store.ingest(tok(e), rand_base + e, e)
            rows.append(store.get(tok(e), rand_base + e, e))
        return rows

    def test_single_epoch(self, store):
        events = reconstruct_events(self._rows(store, [5]), 42, onset_epoch=0, cell_size_m=2.0)
        assert len(events) == 1
        assert events[0].duration_s == 15
        assert events[0].distance_m == 1.0

    def test_consecutive_epochs_merge(self, store):
        events = reconstruct_events(self._rows(store, [1, 2, 3, 4]), 42, onset_epoch=0, cell_size_m=2.0)
        assert [e.duration_s for e in events] == [60]
        assert events[0].subject_rand == 1001

    def test_gap_splits(self, store):
        events = reconstruct_events(self._rows(store, [3, 4, 7]), 42, onset_epoch=0, cell_size_m=2.0)
        assert [e.duration_s for e in events] == [30, 15]
        assert [e.start_epoch for e in events] == [3, 7]

    def test_days_since_onset(self, store):
        # 5760 epochs of 15 s is one day
        rows = self._rows(store, [5760 * 2 + 10])
        assert reconstruct_events(rows, 42, onset_epoch=0, cell_size_m=2.0)[0].days_since_onset == 2
        assert reconstruct_events(rows, 42, onset_epoch=5760 * 3, cell_size_m=2.0)[0].days_since_onset == 0

    def test_reporter_rand_per_epoch(self, store):
        events = reconstruct_events(self._rows(store, [3, 8]), {3: 11, 8: 12}, onset_epoch=0, cell_size_m=1.0)
        assert [e.peer_rand for e in events] == [11, 12]

    def test_empty(self):
        with pytest.raises(EmptyEventsError):
            reconstruct_events([], 1, onset_epoch=0, cell_size_m=2.0)
