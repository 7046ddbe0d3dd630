import asyncio
import json
import os

import fakeredis
import fakeredis.aioredis
import httpx
import pytest
from fastapi.testclient import TestClient
from redis.exceptions import ConnectionError as RedisConnectionError

from spikestrack import __version__
from spikestrack.core.config import config
from spikestrack.core.exceptions import JobStoreError
from spikestrack.main import app
from spikestrack.middleware.rate_limiter import limiter
from spikestrack.services.resultstore import ResultStore
from spikestrack.utils import redis_helper
from spikestrack.workers import job_handler

client = TestClient(app)


@pytest.fixture(autouse=True)
def redis_server(monkeypatch):
    """Backs the job store with an in-memory Redis server, fresh for every test."""
    server = fakeredis.FakeServer()

    async def fake_client():
        return fakeredis.aioredis.FakeRedis(server=server, decode_responses=True)

    monkeypatch.setattr(redis_helper, "get_redis_client", fake_client)
    limiter.reset()
    yield server
    limiter.reset()


def _redis_down(monkeypatch):
    async def unreachable():
        raise RedisConnectionError("connection refused")

    monkeypatch.setattr(redis_helper, "get_redis_client", unreachable)


def test_health():
    assert client.get("/health").json() == {"status": "OK"}
    body = client.get("/health/status").json()
    assert body == {"status": "OK", "version": __version__, "job_count": 0}


def test_job_record_is_json_under_a_prefixed_key(redis_server):
    asyncio.run(redis_helper.set_job_status("abc", "processing"))
    asyncio.run(redis_helper.set_job_status("abc", "completed", "done", ["boxes.csv"]))
    raw = fakeredis.FakeRedis(server=redis_server, decode_responses=True)
    stored = json.loads(raw.get("spikes:job:abc"))
    assert stored == {"status": "completed", "detail": "done", "files": ["boxes.csv"]}
    assert 0 < raw.ttl("spikes:job:abc") <= config.JOB_TTL


def test_status_update_keeps_previous_detail_and_files():
    asyncio.run(redis_helper.set_job_status("abc", "completed", "done", ["boxes.csv"]))
    asyncio.run(redis_helper.set_job_status("abc", "archived"))
    assert asyncio.run(redis_helper.get_job_status("abc")) == {
        "status": "archived", "detail": "done", "files": ["boxes.csv"]}
    assert asyncio.run(redis_helper.job_count()) == 1


def test_store_errors_are_wrapped(monkeypatch):
    _redis_down(monkeypatch)
    with pytest.raises(JobStoreError):
        asyncio.run(redis_helper.set_job_status("abc", "pending"))
    with pytest.raises(JobStoreError):
        asyncio.run(redis_helper.get_job_status("abc"))


def test_unreachable_store_returns_503(monkeypatch, small_sequence):
    _redis_down(monkeypatch)
    assert client.get("/jobs/abc").status_code == 503
    assert client.get("/health/status").status_code == 503
    response = client.post("/tracking/jobs", json={"sequence_dir": str(small_sequence)})
    assert response.status_code == 503


def test_unknown_job_is_not_found():
    response = client.get("/jobs/does-not-exist")
    assert response.status_code == 404
    assert client.delete("/jobs/does-not-exist").status_code == 404


def test_deleted_job_is_forgotten():
    asyncio.run(redis_helper.set_job_status("abc", "completed", "done"))
    assert client.delete("/jobs/abc").status_code == 204
    assert client.get("/jobs/abc").status_code == 404
    assert client.get("/health/status").json()["job_count"] == 0


def test_tracking_job_with_bad_config_is_rejected(small_sequence):
    response = client.post("/tracking/jobs", json={"sequence_dir": str(small_sequence),
                                                   "config": {"theta_c": "1.5"}})
    assert response.status_code == 400
    assert "theta_c" in response.json()["detail"]


def test_evaluation_job_needs_sequences():
    response = client.post("/evaluation/jobs", json={"sequence_dirs": []})
    assert response.status_code == 422


def test_tracking_job_runs_to_completion(tmp_path, small_sequence):
    out = tmp_path / "job_out"
    response = client.post("/tracking/jobs", json={"sequence_dir": str(small_sequence), "output_dir": str(out)})
    assert response.status_code == 202
    job = response.json()
    assert job["status"] == "pending"

    status = client.get(f"/jobs/{job['job_id']}").json()
    assert status["status"] == "completed"
    assert "5 frames tracked" in status["detail"]
    assert status["files"] == ["boxes.csv"]
    assert (out / "boxes.csv").exists()


def test_failed_job_reports_the_error(tmp_path):
    response = client.post("/tracking/jobs", json={"sequence_dir": str(tmp_path / "absent"),
                                                   "output_dir": str(tmp_path / "out")})
    status = client.get(f"/jobs/{response.json()['job_id']}").json()
    assert status["status"] == "failed"
    assert "Tracking error" in status["detail"]


def test_oracle_evaluation_job(tmp_path, small_sequence):
    response = client.post("/evaluation/jobs", json={"sequence_dirs": [str(small_sequence)], "oracle": True,
                                                     "output_dir": str(tmp_path / "eval")})
    status = client.get(f"/jobs/{response.json()['job_id']}").json()
    assert status["status"] == "completed"
    assert "precision@20 1.000" in status["detail"]
    assert (tmp_path / "eval" / "summary.csv").exists()
    assert status["files"] == ["curves.csv", "summary.csv"]


def test_webhook_skipped_without_url():
    assert asyncio.run(job_handler.send_webhook_notification(None, "job", "completed", "done")) is False


def _mock_client(monkeypatch, handler):
    real_client = httpx.AsyncClient

    def factory(**kwargs):
        return real_client(transport=httpx.MockTransport(handler), **kwargs)

    monkeypatch.setattr(job_handler.httpx, "AsyncClient", factory)


def test_webhook_posts_the_job_state(monkeypatch):
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200)

    _mock_client(monkeypatch, handler)
    sent = asyncio.run(job_handler.send_webhook_notification("http://hooks.local/done", "job-1", "completed", "ok"))
    assert sent is True
    assert len(seen) == 1
    assert b'"job_id": "job-1"' in seen[0].content or b'"job_id":"job-1"' in seen[0].content


def test_webhook_retries_then_gives_up(monkeypatch):
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(500)

    _mock_client(monkeypatch, handler)
    sent = asyncio.run(job_handler.send_webhook_notification("http://hooks.local/done", "job-2", "failed", "boom",
                                                             max_retries=3, backoff=0.0))
    assert sent is False
    assert len(calls) == 3


def test_result_store_layout(tmp_path):
    store = ResultStore(str(tmp_path / "results"))
    path = store.job_dir("abc")
    assert os.path.isdir(path)
    with open(f"{path}/boxes.csv", "w") as handle:
        handle.write("frame\n")
    os.makedirs(f"{path}/overlays")
    with open(f"{path}/overlays/0001.png", "wb") as handle:
        handle.write(b"")
    assert store.list_files(path) == ["boxes.csv", os.path.join("overlays", "0001.png")]
    assert len(os.path.relpath(path, store.root).split(os.sep)) == 4
    assert store.list_files(str(tmp_path / "nowhere")) == []


def test_job_creation_is_rate_limited(small_sequence):
    allowed = int(config.RATE_LIMIT.split("/")[0])
    body = {"sequence_dir": str(small_sequence), "config": {"theta_c": "1.5"}}
    codes = [client.post("/tracking/jobs", json=body).status_code for _ in range(allowed + 1)]
    assert codes[:allowed] == [400] * allowed
    assert codes[-1] == 429
    response = client.post("/tracking/jobs", json=body)
    assert response.json() == {"detail": "Rate limit exceeded. Try again later."}
