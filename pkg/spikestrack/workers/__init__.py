# Background workers for tracking and evaluation jobs.
