"""
AC sweep endpoint.
"""
from fastapi import APIRouter, HTTPException

from .. import schemas
from ..exceptions import NetlistError, SolverError
from ..netlist import parse_netlist
from ..sweep import run_sweep

router = APIRouter(prefix="/sweeps", tags=["sweeps"])


@router.post("/", response_model=schemas.SpectrumDocument)
def create_sweep(body: schemas.SweepRequest):
    """Solve a netlist over the plan's grid and return the per-probe response."""
    try:
        netlist = parse_netlist(body.netlist)
        spectrum = run_sweep(netlist, body.plan)
    except NetlistError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except SolverError as e:
        raise HTTPException(status_code=500, detail=str(e))
    return spectrum.to_document()
