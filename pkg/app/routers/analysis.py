"""
Analysis endpoints: fidelity, RB rate extraction and spectrum peaks.
"""
import math
from typing import List

from fastapi import APIRouter, HTTPException

from .. import analysis, schemas
from ..sweep import Spectrum

router = APIRouter(prefix="/analysis", tags=["analysis"])


@router.post("/fidelity", response_model=schemas.FidelityResult)
def compute_fidelity(body: schemas.FidelityInput):
    return analysis.fidelity(body)


@router.post("/rb-extract", response_model=schemas.RbExtractResult)
def extract_rates(body: schemas.RbMatrixFile):
    if body.t_f is None:
        raise HTTPException(status_code=422, detail="t_f is required")
    try:
        rho = analysis.RbDensityMatrix(
            a=body.a, c=body.c, b=complex(body.re_b, body.im_b), t_f=body.t_f,
            alpha0=schemas.as_complex(body.alpha0), beta0=schemas.as_complex(body.beta0),
        )
        result = analysis.rb_extract(rho)
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return schemas.RbExtractResult(
        gamma1=result.gamma1,
        gamma2=result.gamma2 if math.isfinite(result.gamma2) else None,
        delta_omega=result.delta_omega,
        t1_s=1.0 / result.gamma1 if result.gamma1 > 0 else None,
        flags=list(result.flags),
    )


@router.post("/peaks", response_model=List[schemas.PeakReport])
def spectrum_peaks(body: schemas.PeaksRequest):
    """Resonances of one probe (every probe when none is named)."""
    try:
        spectrum = Spectrum.from_document(body.spectrum)
        peaks = analysis.peaks_with_settings(spectrum, body.settings, probe=body.probe)
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return [peak.to_report() for peak in peaks]
