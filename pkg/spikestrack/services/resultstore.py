import logging
import os
from datetime import datetime
from typing import List, Optional

from spikestrack.core.config import config

logger = logging.getLogger(__name__)


class ResultStore:
    """Local directory tree holding the outputs of service jobs, keyed by date and job id."""

    def __init__(self, root: Optional[str] = None):
        self.root = root or config.RESULTS_DIR
        try:
            os.makedirs(self.root, exist_ok=True)
        except OSError as e:
            logger.critical(f"Cannot create results directory {self.root}: {e}")
            raise
        logger.debug(f"Result store rooted at {self.root}.")

    def job_dir(self, job_id: str, when: Optional[datetime] = None) -> str:
        """Creates and returns the output directory of a job."""
        key = os.path.join((when or datetime.now()).strftime("%Y/%m/%d"), job_id)
        path = os.path.join(self.root, key)
        os.makedirs(path, exist_ok=True)
        return path

    @staticmethod
    def list_files(directory: str) -> List[str]:
        """Files written by a job, relative to its output directory."""
        if not os.path.isdir(directory):
            logger.warning(f"Directory does not exist: {directory}")
            return []
        stored = []
        for dirpath, _, filenames in os.walk(directory):
            for filename in sorted(filenames):
                stored.append(os.path.relpath(os.path.join(dirpath, filename), directory))
        if not stored:
            logger.warning(f"No files found in directory: {directory}")
        return sorted(stored)
