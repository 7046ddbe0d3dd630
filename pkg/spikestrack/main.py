from fastapi import FastAPI

from spikestrack import __version__
from spikestrack.api.routes import router
from spikestrack.core.config import configure_logging
from spikestrack.middleware.rate_limiter import init_app
from spikestrack.utils.redis_helper import close_redis_client

configure_logging()

app = FastAPI(title="spikestrack", version=__version__)
init_app(app)
app.include_router(router)


@app.on_event("shutdown")
async def shutdown():
    await close_redis_client()


@app.get("/health")
async def health_check():
    return {"status": "OK"}
