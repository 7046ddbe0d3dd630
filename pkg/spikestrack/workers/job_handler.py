import asyncio
import logging
import uuid
from typing import Optional

import httpx
from fastapi import BackgroundTasks
from starlette.concurrency import run_in_threadpool

from spikestrack.core.config import build_tracker_config, config
from spikestrack.core.exceptions import SpikesError
from spikestrack.core.imaging import BoundingBox
from spikestrack.models.trackingmodels import EvalJobRequest, TrackJobRequest
from spikestrack.services import runner
from spikestrack.services.resultstore import ResultStore
from spikestrack.utils.redis_helper import set_job_status

logger = logging.getLogger(__name__)


async def start_tracking_job(request: TrackJobRequest, background_tasks: BackgroundTasks) -> str:
    """Validates the request configuration, registers the job and queues the tracking run."""
    tracker_config = build_tracker_config(request.config)
    job_id = str(uuid.uuid4())
    await set_job_status(job_id, "pending")
    logger.info(f"Tracking job {job_id} registered for {request.sequence_dir}.")
    background_tasks.add_task(_run_tracking_task, request, tracker_config, job_id, config.WEBHOOK_URL)
    return job_id


async def start_evaluation_job(request: EvalJobRequest, background_tasks: BackgroundTasks) -> str:
    tracker_config = build_tracker_config(request.config)
    job_id = str(uuid.uuid4())
    await set_job_status(job_id, "pending")
    logger.info(f"Evaluation job {job_id} registered for {len(request.sequence_dirs)} sequences.")
    background_tasks.add_task(_run_evaluation_task, request, tracker_config, job_id, config.WEBHOOK_URL)
    return job_id


def _output_dir(requested: Optional[str], job_id: str) -> str:
    return requested or ResultStore().job_dir(job_id)


async def _run_tracking_task(request: TrackJobRequest, tracker_config, job_id: str, webhook_url: Optional[str]):
    """Runs the tracker off the event loop and records the outcome."""
    try:
        await set_job_status(job_id, "processing")
        output_dir = _output_dir(request.output_dir, job_id)
        init_box = BoundingBox(*request.init_box) if request.init_box else None
        records = await run_in_threadpool(
            runner.track_sequence, request.sequence_dir, tracker_config, output_dir,
            init_box, request.overlay, False,
        )
        detail = f"{len(records)} frames tracked; results in {output_dir}"
        await set_job_status(job_id, "completed", detail, ResultStore.list_files(output_dir))
        logger.info(f"Job {job_id} completed: {detail}.")
        await send_webhook_notification(webhook_url, job_id, "completed", detail)
    except (SpikesError, ValueError, OSError) as e:
        await handle_job_failure(job_id, f"Tracking error: {e}", webhook_url)
    except Exception as e:
        await handle_job_failure(job_id, f"Unexpected error: {e}", webhook_url)


async def _run_evaluation_task(request: EvalJobRequest, tracker_config, job_id: str, webhook_url: Optional[str]):
    try:
        await set_job_status(job_id, "processing")
        output_dir = _output_dir(request.output_dir, job_id)
        report = await run_in_threadpool(
            runner.evaluate_sequences, request.sequence_dirs, tracker_config, output_dir,
            request.oracle, tracker_config.threads,
        )
        if report.pooled is None:
            raise ValueError(f"all {len(report.failures)} sequences failed")
        detail = (f"{len(report.sequences)} sequences, precision@20 {report.pooled.precision_at_20:.3f}, "
                  f"AUC {report.pooled.auc:.3f}; results in {output_dir}")
        await set_job_status(job_id, "completed", detail, ResultStore.list_files(output_dir))
        logger.info(f"Job {job_id} completed: {detail}.")
        await send_webhook_notification(webhook_url, job_id, "completed", detail)
    except (SpikesError, ValueError, OSError) as e:
        await handle_job_failure(job_id, f"Evaluation error: {e}", webhook_url)
    except Exception as e:
        await handle_job_failure(job_id, f"Unexpected error: {e}", webhook_url)


async def handle_job_failure(job_id: str, error_message: str, webhook_url: Optional[str]):
    """Marks the job failed and notifies the webhook."""
    try:
        await set_job_status(job_id, "failed", error_message)
        logger.error(f"Job {job_id} failed. Error: {error_message}")
        await send_webhook_notification(webhook_url, job_id, "failed", error_message)
    except Exception as e:
        logger.critical(f"Failed to update status to 'failed' for job {job_id}. "
                        f"Original error: {error_message}. Status update error: {e}")


async def send_webhook_notification(webhook_url: Optional[str], job_id: str, status: str, message: str,
                                    max_retries: int = 3, backoff: float = 2.0) -> bool:
    """Posts the final job state to the webhook, retrying with exponential backoff.

    Returns False when no webhook is configured or every attempt failed.
    """
    if not webhook_url:
        logger.debug(f"No webhook configured; job {job_id} notification skipped.")
        return False
    payload = {"job_id": job_id, "status": status, "message": message}

    for attempt in range(1, max_retries + 1):
        try:
            async with httpx.AsyncClient(timeout=10) as client:
                response = await client.post(webhook_url, json=payload)
            if response.status_code == 200:
                logger.info(f"Webhook notification for job {job_id} sent successfully.")
                return True
            logger.error(f"Failed to send webhook for job {job_id}. Response status: {response.status_code}. "
                         f"Attempt {attempt} of {max_retries}")
        except httpx.RequestError as e:
            logger.error(f"Request error on webhook for job {job_id}: {e}. Attempt {attempt} of {max_retries}")

        if attempt < max_retries:
            await asyncio.sleep(backoff ** attempt)

    logger.critical(f"Webhook notification failed for job {job_id} after {max_retries} attempts.")
    return False
