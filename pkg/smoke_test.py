#!/usr/bin/env python3
"""
Smoke test against a running PAARS service.
Uploads two co-located records, files a diagnosis with a registry code the
service was started with, then runs the PSI query and score lookup.

    python main.py --config paars.conf        # registry.codes = smoke-1
    python smoke_test.py --url http://localhost:8000 --code smoke-1
"""

import argparse
import secrets
import sys

import requests

from paars_engine.client.token import Token
from paars_engine.psi import PsiSession, decode_element, encode_element

BASE_URL = "http://localhost:8000"
EPOCH = 1000


class Smoke:
    def __init__(self, base_url: str, code: str):
        self.base_url = base_url.rstrip("/")
        self.code = code
        self.token = Token(secrets.token_bytes(32))
        self.peer_rand = secrets.randbits(63)
        self.reporter_rand = secrets.randbits(63)

    def url(self, path: str) -> str:
        return f"{self.base_url}{path}"

    def test_health_endpoint(self):
        """Health check endpoint"""
        print("🔍 Testing health endpoint...")
        response = requests.get(self.url("/health"), timeout=10)
        if response.status_code == 200:
            print(f"✅ Health check passed: {response.json()['status']}")
            return True
        print(f"❌ Health check failed: {response.status_code}")
        return False

    def test_records(self):
        """Two devices in one block upload the same token"""
        print("🔍 Testing record upload...")
        for rand in (self.peer_rand, self.reporter_rand):
            response = requests.post(self.url("/v1/records"), json={
                "token": self.token.hex, "rand": str(rand), "epoch": EPOCH,
            }, timeout=10)
            if response.status_code != 201:
                print(f"❌ Upload failed: {response.status_code}")
                return False
        print("✅ Both records stored")
        return True

    def test_malformed_record(self):
        """Malformed uploads are rejected with 400"""
        print("🔍 Testing error handling...")
        response = requests.post(self.url("/v1/records"), json={"token": "ff56", "rand": "1", "epoch": 0}, timeout=10)
        if response.status_code == 400 and response.json().get("error_code") == "MALFORMED_REQUEST":
            print("✅ Error handling working - malformed record rejected")
            return True
        print(f"❌ Error handling failed: expected 400, got {response.status_code}")
        return False

    def test_diagnosis(self):
        """Reporter shares its record with a registry code"""
        print("🔍 Testing diagnosis upload...")
        response = requests.post(self.url("/v1/diagnosis"), json={
            "code": self.code,
            "onset_epoch": EPOCH,
            "entries": [{"token": self.token.hex, "rand": str(self.reporter_rand), "epoch": EPOCH}],
        }, timeout=30)
        if response.status_code == 200:
            data = response.json()
            print(f"✅ Diagnosis applied: {data['updated']} infected, {data['peers_scored']} peers scored")
            return True
        print(f"❌ Diagnosis failed: {response.status_code} {response.json().get('error_code')}")
        return False

    def test_psi_and_scores(self):
        """Peer finds its token through PSI and reads its own score"""
        print("🔍 Testing PSI query and score lookup...")
        session = PsiSession([self.token])
        response = requests.post(self.url("/v1/psi/round1"),
                                 json=[encode_element(y) for y in session.round1()], timeout=30)
        if response.status_code != 200:
            print(f"❌ PSI round failed: {response.status_code}")
            return False
        body = response.json()
        matches = session.finish([decode_element(v) for v in body["client"]],
                                 [decode_element(v) for v in body["server"]])
        if not matches:
            print("❌ PSI found no match for a diagnosed contact")
            return False

        response = requests.post(self.url("/v1/scores"),
                                 json=[{"token": self.token.hex, "rand": str(self.peer_rand)}], timeout=10)
        if response.status_code != 200:
            print(f"❌ Score lookup failed: {response.status_code}")
            return False
        print(f"✅ Exposure probability: {response.json()[0]['p']:.4f}")
        return True

    def test_occupancy(self):
        """Occupancy counts both devices"""
        print("🔍 Testing occupancy...")
        response = requests.get(self.url("/v1/occupancy"), params={"from": EPOCH, "to": EPOCH}, timeout=10)
        if response.status_code == 200 and response.json()["total"] >= 2:
            print(f"✅ Occupancy: {response.json()['total']} devices")
            return True
        print(f"❌ Occupancy failed: {response.status_code}")
        return False


def main(argv=None):
    """Run all checks in order"""
    parser = argparse.ArgumentParser(description="PAARS smoke test")
    parser.add_argument("--url", default=BASE_URL)
    parser.add_argument("--code", default="smoke-1", help="Registry code the service accepts")
    args = parser.parse_args(argv)

    smoke = Smoke(args.url, args.code)
    print("🚀 Starting PAARS smoke tests...")
    print("=" * 50)

    tests = [
        smoke.test_health_endpoint,
        smoke.test_records,
        smoke.test_malformed_record,
        smoke.test_diagnosis,
        smoke.test_psi_and_scores,
        smoke.test_occupancy,
    ]

    passed = 0
    for test in tests:
        try:
            if test():
                passed += 1
        except requests.RequestException as e:
            print(f"❌ Test {test.__name__} crashed: {e}")
        print()

    print("=" * 50)
    print(f"📊 Test Results: {passed}/{len(tests)} tests passed")
    if passed == len(tests):
        print("🎉 All smoke tests passed!")
        return 0
    print("⚠️  Some tests failed. Check the service log.")
    return 1


if __name__ == "__main__":
    sys.exit(main())
