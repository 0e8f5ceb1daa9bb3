"""
SQLAlchemy models for the experiment registry.
"""
from datetime import datetime

from sqlalchemy import JSON, Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import relationship

from .database import Base


class Experiment(Base):
    """One Monte Carlo ensemble: its inputs, base topology and summary."""
    __tablename__ = "experiments"

    id = Column(Integer, primary_key=True, index=True)
    name = Column(String, index=True, nullable=False)
    # Decimal text: seeds span the unsigned 64-bit range, wider than an SQL integer.
    seed = Column(String(20), nullable=False)
    delta = Column(Float, nullable=False)
    n_runs = Column(Integer, nullable=False)
    arrangement = Column(String, nullable=False)
    n_qubits = Column(Integer, nullable=False)
    base_digest = Column(String(64), index=True, nullable=False)
    config = Column(JSON, nullable=False)
    summary = Column(JSON, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)

    runs = relationship(
        "ExperimentRun",
        back_populates="experiment",
        cascade="all, delete-orphan",
        order_by="ExperimentRun.sample_id",
    )


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, index=True)
    experiment_id = Column(Integer, ForeignKey("experiments.id"), nullable=False, index=True)
    sample_id = Column(Integer, nullable=False)
    infidelity = Column(Float, nullable=True)
    gamma1 = Column(Float, nullable=True)
    n_peaks = Column(Integer, default=0, nullable=False)
    error = Column(Text, nullable=True)
    report = Column(JSON, nullable=True)

    experiment = relationship("Experiment", back_populates="runs")
