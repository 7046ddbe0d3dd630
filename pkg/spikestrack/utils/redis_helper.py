import json
import logging
from typing import Any, Dict, List, Optional

from redis import asyncio as aioredis
from redis.asyncio.retry import Retry
from redis.backoff import ExponentialBackoff
from redis.exceptions import RedisError

from spikestrack.core.config import config
from spikestrack.core.exceptions import JobStoreError

logger = logging.getLogger(__name__)

MAX_RETRIES = 3
KEY_PREFIX = "spikes:job:"

redis_client: Optional[aioredis.Redis] = None


def _key(job_id: str) -> str:
    return f"{KEY_PREFIX}{job_id}"


async def get_redis_client() -> aioredis.Redis:
    """Returns the shared Redis client; connection errors are retried with exponential backoff."""
    global redis_client
    if redis_client is None:
        redis_client = aioredis.from_url(
            config.REDIS_URL,
            decode_responses=True,
            retry=Retry(ExponentialBackoff(), MAX_RETRIES),
        )
        logger.info(f"Redis client created for {config.REDIS_URL}.")
    return redis_client


async def close_redis_client():
    global redis_client
    if redis_client is not None:
        await redis_client.close()
        redis_client = None
        logger.info("Redis client closed.")


async def set_job_status(job_id: str, status: str, detail: Optional[str] = None,
                         files: Optional[List[str]] = None):
    """Stores the job record as JSON, keeping the previous detail and files when none are given."""
    try:
        redis = await get_redis_client()
        raw = await redis.get(_key(job_id))
        previous = json.loads(raw) if raw else {}
        record = {
            "status": status,
            "detail": detail if detail is not None else previous.get("detail"),
            "files": files if files is not None else previous.get("files", []),
        }
        await redis.set(_key(job_id), json.dumps(record), ex=config.JOB_TTL)
    except RedisError as e:
        logger.error(f"Error setting job status for {job_id}: {e}")
        raise JobStoreError(f"Cannot store job {job_id}: {e}") from e
    logger.info(f"Job status for {job_id} set to {status}.")


async def get_job_status(job_id: str) -> Optional[Dict[str, Any]]:
    """The stored record ({status, detail, files}) or None for an unknown job."""
    try:
        redis = await get_redis_client()
        raw = await redis.get(_key(job_id))
    except RedisError as e:
        logger.error(f"Error getting job status for {job_id}: {e}")
        raise JobStoreError(f"Cannot read job {job_id}: {e}") from e
    return json.loads(raw) if raw else None


async def delete_job_status(job_id: str) -> bool:
    try:
        redis = await get_redis_client()
        deleted = await redis.delete(_key(job_id))
    except RedisError as e:
        logger.error(f"Error deleting job status for {job_id}: {e}")
        raise JobStoreError(f"Cannot delete job {job_id}: {e}") from e
    if deleted:
        logger.info(f"Job status for {job_id} deleted.")
    return bool(deleted)


async def job_count() -> int:
    try:
        redis = await get_redis_client()
        return len([key async for key in redis.scan_iter(match=f"{KEY_PREFIX}*")])
    except RedisError as e:
        logger.error(f"Error counting jobs: {e}")
        raise JobStoreError(f"Cannot count jobs: {e}") from e
