"""
Entry point for the qsim API.
Serves circuit building, AC sweeps, analysis and the experiment registry.
"""
import logging
import os

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from slowapi import Limiter, _rate_limit_exceeded_handler
from slowapi.errors import RateLimitExceeded
from slowapi.middleware import SlowAPIMiddleware
from slowapi.util import get_remote_address
from starlette.middleware.gzip import GZipMiddleware

from .database import Base, engine
from .routers import analysis, circuits, experiments, sweeps

logger = logging.getLogger(__name__)

# Create database tables
Base.metadata.create_all(bind=engine)

app = FastAPI(
    title="qsim API",
    description="Frequency-domain simulation of superconducting qubit readout circuits",
    version="0.1.0",
)

# Initialize rate limiter
if os.getenv("TESTING", "").lower() == "true":
    limiter = Limiter(key_func=lambda: "test", enabled=False)
else:
    limiter = Limiter(key_func=get_remote_address)
app.state.limiter = limiter
app.add_exception_handler(RateLimitExceeded, _rate_limit_exceeded_handler)


@app.on_event("startup")
async def startup_event():
    logger.info("qsim API started (workers per ensemble: %s)", os.getenv("QSIM_WORKERS", "1"))


app.add_middleware(GZipMiddleware, minimum_size=500)
app.add_middleware(SlowAPIMiddleware)

ENVIRONMENT = os.getenv("ENVIRONMENT", "development").lower()

allowed_origins_str = os.getenv("ALLOWED_ORIGINS", "")
if allowed_origins_str:
    allowed_origins = [origin.strip() for origin in allowed_origins_str.split(",") if origin.strip()]
else:
    allowed_origins = ["*"]

if ENVIRONMENT == "production" and "*" in allowed_origins:
    raise ValueError("CORS allow_origins cannot be '*' in production. Set ALLOWED_ORIGINS environment variable.")

app.add_middleware(
    CORSMiddleware,
    allow_origins=allowed_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Apply rate limiting to experiment creation
for route in experiments.router.routes:
    if hasattr(route, 'path') and route.path == "/experiments/" and 'POST' in getattr(route, 'methods', ()):
        route.endpoint = limiter.limit("10/minute")(route.endpoint)

app.include_router(circuits.router)
app.include_router(sweeps.router)
app.include_router(experiments.router)
app.include_router(analysis.router)


@app.get("/", tags=["root"])
@app.head("/", tags=["root"])
async def read_root():
    return {"message": "qsim API is running"}


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="127.0.0.1", port=8000)
