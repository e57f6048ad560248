"""Pydantic request/response models for the HTTP service.

The measure schema mirrors the library's JSON form exactly:
{support: [lo, hi], atoms: [{x, mass}...], density: {breaks: [...], values: [...]}}.
"""

from __future__ import annotations

from pydantic import BaseModel, Field

DEFAULT_VERIFY_SEED = 20260809


class MeasureAtom(BaseModel):
    x: float
    mass: float


class MeasureDensity(BaseModel):
    breaks: list[float] = Field(default_factory=list)
    values: list[float] = Field(default_factory=list)


class MeasureModel(BaseModel):
    support: list[float] | None = None
    atoms: list[MeasureAtom] = Field(default_factory=list)
    density: MeasureDensity = Field(default_factory=MeasureDensity)


class SampleSaoRequest(BaseModel):
    beta: float = 2
    lambda_max: float = 6.0
    seed: int = 0
    dt: float = 1e-3
    reps: int = 1
    tol: float = 1e-3
    threads: int = 1


class SampleGbeRequest(BaseModel):
    beta: int = 2
    n: int = 512
    k: int = 1
    seed: int = 0
    top: int | None = None
    blocks: list[str] = Field(default_factory=lambda: ["lambdas", "tildes", "bs"])


class TailsRequest(BaseModel):
    beta: float = 2
    t_ladder: list[float] = Field(default_factory=lambda: [1.0, 1.5, 2.0])
    reps: int = 10_000
    seed: int = 0
    dt: float = 1e-3
    horizon: float = 10.0
    threads: int = 1


class DistanceRequest(BaseModel):
    a: MeasureModel
    b: MeasureModel
    R: float = 10.0
    grid_step: float = 0.01


class RateRequest(BaseModel):
    target: MeasureModel | None = None
    delta_ladder: list[float] = Field(default_factory=lambda: [0.08, 0.04, 0.02, 0.01])
    R: float = 10.0
    S: float | None = None
    n_cells: int = 512
    kr_step: float = 0.05


class LdpTrendRequest(BaseModel):
    beta: int = 2
    R: float = 10.0
    delta: float = 4.5
    k_ladder: list[int] = Field(default_factory=lambda: [1, 2, 3, 4])
    reps: int = 150
    seed: int = 0
    target: MeasureModel | None = None
    grid_step: float = 0.02
    threads: int = 1


class VerifyRequest(BaseModel):
    seed: int = DEFAULT_VERIFY_SEED
    fast: bool = True


class ResultEnvelope(BaseModel):
    schema_version: str
    code_version: str
    command: str
    spec: dict
    result: dict
