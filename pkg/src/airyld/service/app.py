"""FastAPI service exposing the experiment runners.

One POST endpoint per command; the CLI is a thin client of this app (in
process by default, over HTTP when pointed at a server).  Validation
errors surface as 422, bad domain input as 400, numerical failures as 500
with a diagnostic message.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..experiments import (
    run_distance,
    run_ldp_trend,
    run_rate,
    run_sample_gbe,
    run_sample_sao,
    run_tails,
    run_verify,
)
from .schemas import (
    DistanceRequest,
    LdpTrendRequest,
    MeasureModel,
    RateRequest,
    ResultEnvelope,
    SampleGbeRequest,
    SampleSaoRequest,
    TailsRequest,
    VerifyRequest,
)

app = FastAPI(
    title="airyld service",
    version=__version__,
    description="Edge random-matrix sampling, signed-measure distances, and "
                "large-deviation rate computations.",
)


def _measure_dict(m: MeasureModel | None) -> dict | None:
    return m.model_dump() if m is not None else None


def _guarded(fn, *args, **kwargs) -> dict:
    try:
        return fn(*args, **kwargs)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except RuntimeError as exc:
        raise HTTPException(status_code=500, detail=f"numerical failure: {exc}") from exc


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/sample-sao", response_model=ResultEnvelope)
def sample_sao(req: SampleSaoRequest):
    return _guarded(run_sample_sao, beta=req.beta, lambda_max=req.lambda_max,
                    seed=req.seed, dt=req.dt, reps=req.reps, tol=req.tol,
                    threads=req.threads)


@app.post("/sample-gbe", response_model=ResultEnvelope)
def sample_gbe(req: SampleGbeRequest):
    return _guarded(run_sample_gbe, beta=req.beta, n=req.n, k=req.k,
                    seed=req.seed, top=req.top, blocks=tuple(req.blocks))


@app.post("/tails", response_model=ResultEnvelope)
def tails(req: TailsRequest):
    return _guarded(run_tails, beta=req.beta, t_ladder=req.t_ladder,
                    reps=req.reps, seed=req.seed, dt=req.dt,
                    horizon=req.horizon, threads=req.threads)


@app.post("/distance", response_model=ResultEnvelope)
def distance(req: DistanceRequest):
    return _guarded(run_distance, a=req.a.model_dump(), b=req.b.model_dump(),
                    R=req.R, grid_step=req.grid_step)


@app.post("/rate", response_model=ResultEnvelope)
def rate(req: RateRequest):
    return _guarded(run_rate, target=_measure_dict(req.target),
                    delta_ladder=req.delta_ladder, R=req.R, S=req.S,
                    n_cells=req.n_cells, kr_step=req.kr_step)


@app.post("/ldp-trend", response_model=ResultEnvelope)
def ldp_trend(req: LdpTrendRequest):
    return _guarded(run_ldp_trend, beta=req.beta, R=req.R, delta=req.delta,
                    k_ladder=req.k_ladder, reps=req.reps, seed=req.seed,
                    target=_measure_dict(req.target), grid_step=req.grid_step,
                    threads=req.threads)


@app.post("/verify", response_model=ResultEnvelope)
def verify(req: VerifyRequest):
    return _guarded(run_verify, seed=req.seed, fast=req.fast)
