from fastapi import FastAPI, exceptions
from fastapi.responses import JSONResponse
from pydantic import ValidationError
from src.api import experiments, kinematics
from src.errors import DimerlabError, ValidationFailure
from src.logging_config import logging_manager
import json
import logging
from starlette.middleware.cors import CORSMiddleware

logging_manager.setup_server_logging()

description = """
Dimerlab answers the cheap questions about defects in dimer clusters: how a
monomer scatters at a cluster edge, which momenta pass, where a monomer-trimer
collision sends both defects, and whether a run config is valid.
"""

app = FastAPI(
    title="Dimerlab",
    description=description,
    version="0.1.0",
)

origins = ["http://localhost", "http://127.0.0.1"]

app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["*"],
)

app.include_router(kinematics.router)
app.include_router(experiments.router)

@app.exception_handler(exceptions.RequestValidationError)
@app.exception_handler(ValidationError)
async def validation_exception_handler(request, exc):
    logging.error(f"The client sent invalid data!: {exc}")
    exc_json = json.loads(exc.json())
    response = {"message": [], "data": None}
    for error in exc_json:
        response['message'].append(f"{error['loc']}: {error['msg']}")

    return JSONResponse(response, status_code=422)

@app.exception_handler(ValidationFailure)
async def config_validation_handler(request, exc):
    logging.error(f"Rejected input: {exc}")
    return JSONResponse({"message": exc.messages, "data": None}, status_code=422)

@app.exception_handler(DimerlabError)
async def domain_error_handler(request, exc):
    logging.error(f"Domain error: {exc}")
    return JSONResponse({"message": [str(exc)], "data": None}, status_code=400)

@app.get("/")
async def root():
    return {"message": "Welcome to Dimerlab."}
