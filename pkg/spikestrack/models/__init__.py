# Pydantic records: scenarios, per-frame output, snapshots and job requests.
