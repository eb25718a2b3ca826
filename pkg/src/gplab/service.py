"""HTTP facade over the laboratory.

Cheap calculators (tail formulas, radii, the Rinott bound, dependency
graphs) answer synchronously; experiment sweeps run as background jobs that
clients poll and then download output files from.  The CLI talks to this app
in-process by default, or to a remote instance over the network.
"""

from __future__ import annotations

import math
import tempfile
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from . import constructions, experiments, models, stats
from .errors import ConfigInvalid, GplabError
from .sampling import RngStream, ball_tail, cap_mass, halfspace_tail, std_normal_cdf

app = FastAPI(title="gplab", version=experiments.ARTIFACT_VERSION)


class HealthResponse(BaseModel):
    status: str
    version: str


class TailsRequest(BaseModel):
    r: float
    d: int = 2


class TailsResponse(BaseModel):
    r: float
    d: int
    ball_tail: float
    halfspace_tail: float
    cdf: float


class CapMassRequest(BaseModel):
    offset: float
    R: float
    d: int


class CapMassResponse(BaseModel):
    mass: float


class RadiiRequest(BaseModel):
    n: int
    d: int = 2
    c_0: float | None = None
    c: float = 1.0
    c_1: float = 1.0


class RadiiResponse(BaseModel):
    R: float
    rho: float
    r_sandwich: float
    r_construction: float


class RinottRequest(BaseModel):
    D: float
    M: float
    m: float
    var_xi: float


class RinottResponse(BaseModel):
    bound: float


class DepgraphRequest(BaseModel):
    n: int
    d: int = 2
    seed: int = 42
    c_0: float | None = None
    c: float | None = None
    c_1: float | None = None


class DepgraphResponse(BaseModel):
    n: int
    m: int
    max_degree: int
    net: dict
    graph: dict


class JobCreated(BaseModel):
    job_id: str


class JobStatus(BaseModel):
    job_id: str
    status: str
    error: str | None = None
    manifest: experiments.RunManifest | None = None


class FileList(BaseModel):
    files: list[str]


class _Job:
    def __init__(self, workdir: Path):
        self.workdir = workdir
        self.status = "running"
        self.error: str | None = None
        self.manifest: experiments.RunManifest | None = None


_JOBS: dict[str, _Job] = {}
_JOBS_LOCK = threading.Lock()


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=experiments.ARTIFACT_VERSION)


@app.post("/calc/tails", response_model=TailsResponse)
def calc_tails(req: TailsRequest) -> TailsResponse:
    if req.r < 0 or req.d < 1:
        raise HTTPException(status_code=422, detail="need r >= 0 and d >= 1")
    return TailsResponse(
        r=req.r,
        d=req.d,
        ball_tail=ball_tail(req.r, req.d),
        halfspace_tail=halfspace_tail(req.r),
        cdf=float(std_normal_cdf(req.r)),
    )


@app.post("/calc/cap-mass", response_model=CapMassResponse)
def calc_cap_mass(req: CapMassRequest) -> CapMassResponse:
    try:
        return CapMassResponse(mass=cap_mass(req.offset, req.R, req.d))
    except (ValueError, GplabError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@app.post("/calc/radii", response_model=RadiiResponse)
def calc_radii(req: RadiiRequest) -> RadiiResponse:
    try:
        bundle = models.RadiiBundle.for_model(req.n, req.d, c_0=req.c_0, c=req.c, c_1=req.c_1)
    except (ValueError, GplabError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return RadiiResponse(
        R=bundle.R,
        rho=bundle.rho,
        r_sandwich=bundle.r_sandwich,
        r_construction=bundle.r_construction,
    )


@app.post("/calc/rinott", response_model=RinottResponse)
def calc_rinott(req: RinottRequest) -> RinottResponse:
    try:
        return RinottResponse(bound=stats.rinott_bound(req.D, req.M, req.m, req.var_xi))
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@app.post("/calc/depgraph", response_model=DepgraphResponse)
def calc_depgraph(req: DepgraphRequest) -> DepgraphResponse:
    cfg = experiments.parse_config(
        {
            "kind": "depgraph", "d": req.d, "n_grid": [req.n], "trials": 2,
            "seed": req.seed, "c_0": req.c_0, "c": req.c, "c_1": req.c_1,
        }
    )
    consts = cfg.constants()
    radii = cfg.radii_for(req.n)
    net = constructions.build_net(radii.rho, 2.0 * consts["c_1"], req.d, RngStream(req.seed, (0, 0, 777)))
    cells = constructions.build_cells(net, radii.R, radii.r_sandwich)
    graph = constructions.build_dependency_graph(cells)
    import json as _json

    return DepgraphResponse(
        n=req.n,
        m=net.m,
        max_degree=graph.max_degree,
        net=_json.loads(net.to_json()),
        graph=_json.loads(graph.to_json()),
    )


def _run_job(job_id: str, cfg: experiments.ExperimentConfig) -> None:
    job = _JOBS[job_id]
    try:
        job.manifest = experiments.run(cfg)
        job.status = "done"
    except Exception as exc:  # surface the failure to the polling client
        job.error = f"{type(exc).__name__}: {exc}"
        job.status = "failed"


@app.post("/experiments", response_model=JobCreated)
def submit_experiment(payload: dict) -> JobCreated:
    try:
        cfg = experiments.parse_config(payload)
    except ConfigInvalid as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    job_id = uuid.uuid4().hex[:12]
    workdir = Path(tempfile.mkdtemp(prefix=f"gplab-{job_id}-"))
    cfg = cfg.model_copy(update={"out": str(workdir)})
    with _JOBS_LOCK:
        _JOBS[job_id] = _Job(workdir)
    thread = threading.Thread(target=_run_job, args=(job_id, cfg), daemon=True)
    thread.start()
    return JobCreated(job_id=job_id)


def _get_job(job_id: str) -> _Job:
    job = _JOBS.get(job_id)
    if job is None:
        raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
    return job


@app.get("/experiments/{job_id}", response_model=JobStatus)
def experiment_status(job_id: str) -> JobStatus:
    job = _get_job(job_id)
    return JobStatus(job_id=job_id, status=job.status, error=job.error, manifest=job.manifest)


@app.get("/experiments/{job_id}/files", response_model=FileList)
def experiment_files(job_id: str) -> FileList:
    job = _get_job(job_id)
    if job.status != "done":
        raise HTTPException(status_code=409, detail=f"job is {job.status}")
    return FileList(files=sorted(p.name for p in job.workdir.iterdir() if p.is_file()))


@app.get("/experiments/{job_id}/files/{name}", response_class=PlainTextResponse)
def experiment_file(job_id: str, name: str) -> str:
    job = _get_job(job_id)
    path = job.workdir / name
    if "/" in name or not path.is_file():
        raise HTTPException(status_code=404, detail=f"no file {name}")
    return path.read_text(encoding="utf-8")
