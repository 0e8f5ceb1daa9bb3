"""
Circuit endpoints: build, validate, export and upload netlists.
"""
from typing import List

from fastapi import APIRouter, File, HTTPException, UploadFile

from .. import schemas, topology
from ..exceptions import NetlistError
from ..netlist import Diagnostic, Netlist, emit_netlist, parse_netlist, validate

router = APIRouter(prefix="/circuits", tags=["circuits"])

NETLIST_SUFFIXES = (".cir", ".net", ".sp")


def diagnostics_out(diagnostics: List[Diagnostic]) -> List[schemas.DiagnosticOut]:
    return [schemas.DiagnosticOut(**d._asdict()) for d in diagnostics]


def parse_or_422(text: str) -> Netlist:
    try:
        return parse_netlist(text)
    except NetlistError as e:
        raise HTTPException(status_code=422, detail=str(e))


def summarize(netlist: Netlist) -> schemas.NetlistSummary:
    return schemas.NetlistSummary(
        title=netlist.title,
        digest=netlist.digest,
        n_nodes=netlist.n_nodes,
        n_elements=len(netlist.elements),
        probes=list(netlist.probes),
        diagnostics=diagnostics_out(validate(netlist)),
    )


@router.post("/build", response_model=schemas.BuildResponse)
def build_circuit(config: schemas.ExperimentConfig):
    """Netlist of the configured array with derived elements and the coupling check."""
    p = config.qubit
    try:
        netlist = topology.build_array(config.array, p, config.drive)
        g = topology.coupling_strength(p.c_g, p.c_q, p.c_r, p.f_q, p.f_r)
        check = topology.check_dispersive(g, p.f_q, p.f_r)
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    table = topology.nominal_table(config.array, p)
    level = topology.drive_current(config.drive)
    return schemas.BuildResponse(
        title=netlist.title,
        netlist=emit_netlist(netlist),
        digest=netlist.digest,
        n_nodes=netlist.n_nodes,
        n_elements=len(netlist.elements),
        derived=[
            schemas.DerivedElementsOut(unit=u, **values._asdict())
            for u, values in topology.table_derived_elements(table)
        ],
        coupling=schemas.CouplingReport(g_over_2pi_hz=g, delta_hz=check.delta, ratio=check.ratio, ok=check.ok),
        drive=schemas.DriveReport(i_amperes=level.i, p_watts=level.p, n_photons=level.n_photons),
        band_boundary_hz=topology.band_boundary(config.array, p),
        diagnostics=diagnostics_out(validate(netlist)),
    )


@router.post("/validate", response_model=schemas.ValidateResponse)
def validate_circuit(body: schemas.NetlistText):
    netlist = parse_or_422(body.text)
    diagnostics = validate(netlist)
    return schemas.ValidateResponse(valid=not diagnostics, diagnostics=diagnostics_out(diagnostics))


@router.post("/export", response_model=schemas.ExportResponse)
def export_circuit(body: schemas.ExportRequest):
    netlist = parse_or_422(body.text)
    return schemas.ExportResponse(
        dialect=body.dialect,
        text=emit_netlist(netlist, body.dialect, body.sweep),
        digest=netlist.digest,
    )


@router.post("/parse/file", response_model=schemas.NetlistSummary)
async def parse_file(file: UploadFile = File(...)):
    """Parse an uploaded netlist file."""
    if not file.filename or not file.filename.lower().endswith(NETLIST_SUFFIXES):
        raise HTTPException(status_code=400, detail="File must be a .cir, .net or .sp netlist")
    content = await file.read()
    try:
        text = content.decode("utf-8")
    except UnicodeDecodeError:
        raise HTTPException(status_code=400, detail="Netlist must be UTF-8 text")
    return summarize(parse_or_422(text))
