import logging

from fastapi import APIRouter, BackgroundTasks, HTTPException, Request, Response, status

from spikestrack import __version__
from spikestrack.core.config import config
from spikestrack.core.exceptions import ConfigError, JobStoreError
from spikestrack.middleware.rate_limiter import limiter
from spikestrack.models.trackingmodels import EvalJobRequest, JobStatus, TrackJobRequest
from spikestrack.utils.redis_helper import delete_job_status, get_job_status, job_count
from spikestrack.workers.job_handler import start_evaluation_job, start_tracking_job

router = APIRouter()
logger = logging.getLogger(__name__)

STORE_UNAVAILABLE = "Job store unavailable"


@router.post("/tracking/jobs", status_code=status.HTTP_202_ACCEPTED, response_model=JobStatus)
@limiter.limit(config.RATE_LIMIT)
async def create_tracking_job(request: Request, job: TrackJobRequest, background_tasks: BackgroundTasks):
    """
    Queues a tracking run over a sequence directory.

    Returns:
        The job id with status "pending"; poll /jobs/{job_id} for progress.
    """
    try:
        job_id = await start_tracking_job(job, background_tasks)
    except ConfigError as e:
        logger.warning(f"Rejected tracking job: {e}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except JobStoreError as e:
        logger.error(f"Cannot register tracking job: {e}")
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=STORE_UNAVAILABLE)
    except Exception as e:
        logger.error(f"Error starting tracking job: {e}")
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail="Failed to start the job")
    return JobStatus(job_id=job_id, status="pending")


@router.post("/evaluation/jobs", status_code=status.HTTP_202_ACCEPTED, response_model=JobStatus)
@limiter.limit(config.RATE_LIMIT)
async def create_evaluation_job(request: Request, job: EvalJobRequest, background_tasks: BackgroundTasks):
    """Queues a one-pass evaluation over several sequence directories."""
    try:
        job_id = await start_evaluation_job(job, background_tasks)
    except ConfigError as e:
        logger.warning(f"Rejected evaluation job: {e}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except JobStoreError as e:
        logger.error(f"Cannot register evaluation job: {e}")
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=STORE_UNAVAILABLE)
    except Exception as e:
        logger.error(f"Error starting evaluation job: {e}")
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail="Failed to start the job")
    return JobStatus(job_id=job_id, status="pending")


@router.get("/jobs/{job_id}", response_model=JobStatus)
async def check_job_status(job_id: str):
    """
    Returns the current status of a job and the files it wrote.

    Raises:
        HTTPException: 404 if the job id is unknown, 503 if the job store is down.
    """
    try:
        record = await get_job_status(job_id)
    except JobStoreError:
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=STORE_UNAVAILABLE)
    if record is None:
        logger.warning(f"Job ID {job_id} not found.")
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Job ID not found.")
    return JobStatus(job_id=job_id, **record)


@router.delete("/jobs/{job_id}", status_code=status.HTTP_204_NO_CONTENT)
async def remove_job(job_id: str):
    """Forgets a job record. Output files are left in place."""
    try:
        deleted = await delete_job_status(job_id)
    except JobStoreError:
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=STORE_UNAVAILABLE)
    if not deleted:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Job ID not found.")
    return Response(status_code=status.HTTP_204_NO_CONTENT)


@router.get("/health/status", status_code=status.HTTP_200_OK)
async def detailed_health_check():
    """Health status, version and number of known jobs."""
    try:
        count = await job_count()
    except JobStoreError:
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=STORE_UNAVAILABLE)
    return {"status": "OK", "version": __version__, "job_count": count}
