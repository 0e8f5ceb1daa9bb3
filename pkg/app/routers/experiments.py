"""
Experiment endpoints: run Monte Carlo ensembles and browse the registry.
"""
import os
from typing import List, Optional

from fastapi import APIRouter, Depends, HTTPException, Request
from sqlalchemy.orm import Session

from .. import analysis, crud, schemas
from ..dependencies import get_db
from ..exceptions import QsimError
from ..montecarlo import run_ensemble

router = APIRouter(prefix="/experiments", tags=["experiments"])


@router.post("/", response_model=schemas.Experiment, status_code=201)
def create_experiment(
    request: Request,
    config: schemas.ExperimentConfig,
    db: Session = Depends(get_db),
):
    """Run the configured ensemble, analyse every run and store the result."""
    workers = int(os.getenv("QSIM_WORKERS", "1"))
    try:
        ensemble = run_ensemble(config.array, config.qubit, config.drive, config.variation,
                                config.sweep, workers=workers)
    except (QsimError, ValueError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    settings = config.analysis
    n_qubits = settings.n_qubits_for_fidelity or config.array.n_qubits
    outcome = analysis.analyse_ensemble(ensemble, settings, n_qubits)
    return crud.create_experiment(
        db, config, ensemble.base_digest, outcome.reports, outcome.summary,
        errors=[run.error for run in ensemble.runs],
    )


@router.get("/", response_model=List[schemas.Experiment])
def list_experiments(
    name: Optional[str] = None,
    arrangement: Optional[str] = None,
    skip: int = 0,
    limit: int = 100,
    db: Session = Depends(get_db),
):
    return crud.get_experiments(db, name=name, arrangement=arrangement, skip=skip, limit=limit)


@router.get("/{experiment_id}", response_model=schemas.Experiment)
def get_experiment(experiment_id: int, db: Session = Depends(get_db)):
    db_experiment = crud.get_experiment_by_id(db, experiment_id)
    if db_experiment is None:
        raise HTTPException(status_code=404, detail="Experiment not found")
    return db_experiment


@router.get("/{experiment_id}/runs", response_model=List[schemas.ExperimentRun])
def get_experiment_runs(experiment_id: int, db: Session = Depends(get_db)):
    runs = crud.get_experiment_runs(db, experiment_id)
    if runs is None:
        raise HTTPException(status_code=404, detail="Experiment not found")
    return runs


@router.delete("/{experiment_id}", response_model=schemas.Experiment)
def delete_experiment(experiment_id: int, db: Session = Depends(get_db)):
    db_experiment = crud.get_experiment_by_id(db, experiment_id)
    if db_experiment is None:
        raise HTTPException(status_code=404, detail="Experiment not found")
    snapshot = schemas.Experiment.model_validate(db_experiment)
    crud.delete_experiment(db, experiment_id)
    return snapshot
