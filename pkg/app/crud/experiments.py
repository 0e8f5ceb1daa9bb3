"""
Experiment registry CRUD operations.
"""
import logging
from typing import List, Optional

from sqlalchemy import desc
from sqlalchemy.orm import Session

from .. import models, schemas

logger = logging.getLogger(__name__)


def create_experiment(
    db: Session,
    config: schemas.ExperimentConfig,
    base_digest: str,
    reports: List[schemas.AnalysisReport],
    summary: schemas.EnsembleSummary,
    errors: Optional[List[Optional[str]]] = None,
) -> models.Experiment:
    """Store one ensemble with a row per run, in sample-id order."""
    errors = errors or [None] * len(reports)
    db_experiment = models.Experiment(
        name=config.name,
        seed=str(config.variation.seed),
        delta=config.variation.delta,
        n_runs=config.variation.n_runs,
        arrangement=config.array.arrangement,
        n_qubits=config.array.n_qubits,
        base_digest=base_digest,
        config=config.model_dump(mode="json"),
        summary=summary.model_dump(mode="json"),
    )
    for report, error in zip(reports, errors):
        db_experiment.runs.append(models.ExperimentRun(
            sample_id=report.run_id,
            infidelity=report.infidelity.value,
            gamma1=report.infidelity.gamma1_per_s,
            n_peaks=len(report.peaks),
            error=error,
            report=report.model_dump(mode="json"),
        ))
    db.add(db_experiment)
    db.commit()
    db.refresh(db_experiment)
    logger.info("Stored experiment %d (%s, %d runs)", db_experiment.id, db_experiment.name, len(reports))
    return db_experiment


def get_experiments(
    db: Session,
    name: Optional[str] = None,
    arrangement: Optional[str] = None,
    skip: int = 0,
    limit: int = 100,
) -> List[models.Experiment]:
    query = db.query(models.Experiment)
    if name:
        query = query.filter(models.Experiment.name.ilike(f"%{name}%"))
    if arrangement:
        query = query.filter(models.Experiment.arrangement == arrangement)
    return query.order_by(desc(models.Experiment.id)).offset(skip).limit(limit).all()


def get_experiment_by_id(db: Session, experiment_id: int) -> Optional[models.Experiment]:
    return db.query(models.Experiment).filter(models.Experiment.id == experiment_id).first()


def get_experiment_runs(db: Session, experiment_id: int) -> Optional[List[models.ExperimentRun]]:
    if get_experiment_by_id(db, experiment_id) is None:
        return None
    return (
        db.query(models.ExperimentRun)
        .filter(models.ExperimentRun.experiment_id == experiment_id)
        .order_by(models.ExperimentRun.sample_id)
        .all()
    )


def delete_experiment(db: Session, experiment_id: int) -> Optional[models.Experiment]:
    db_experiment = get_experiment_by_id(db, experiment_id)
    if db_experiment is None:
        return None
    db.delete(db_experiment)
    db.commit()
    logger.info("Deleted experiment %d", experiment_id)
    return db_experiment
