"""
Pytest configuration and fixtures for the qsim tests.
"""
import os
os.environ["TESTING"] = "true"  # Disable rate limiting in tests

import pytest
from fastapi.testclient import TestClient
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from app.database import Base
from app.main import app
from app.dependencies import get_db
from app import schemas


# Use in-memory SQLite database for testing
SQLALCHEMY_TEST_DATABASE_URL = "sqlite:///:memory:"

engine = create_engine(
    SQLALCHEMY_TEST_DATABASE_URL,
    connect_args={"check_same_thread": False},
    poolclass=StaticPool,
)
TestingSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


@pytest.fixture(scope="function")
def db_session():
    """Create a fresh database for each test."""
    Base.metadata.create_all(bind=engine)
    db = TestingSessionLocal()
    try:
        yield db
    finally:
        db.close()
        Base.metadata.drop_all(bind=engine)


@pytest.fixture(scope="function")
def client(db_session):
    """Create a test client with database override."""
    def override_get_db():
        try:
            yield db_session
        finally:
            pass

    app.dependency_overrides[get_db] = override_get_db
    with TestClient(app) as test_client:
        yield test_client
    app.dependency_overrides.clear()


@pytest.fixture
def unit_params():
    """Default qubit + tank unit (6 GHz qubit, 8 GHz tank)."""
    return schemas.QubitUnitParams()


@pytest.fixture
def drive():
    """Unit-volt drive behind 50 ohm."""
    return schemas.DriveSpec()


@pytest.fixture
def linear_config():
    """Four staggered units on one feedline."""
    return schemas.ArrayConfig(arrangement="linear", n_qubits=4)


@pytest.fixture
def resonator_plan():
    """Narrow plan around the loaded tank of the default unit (about 7.14 GHz)."""
    return schemas.SweepPlan(f_min=6.9e9, f_max=7.4e9, n_coarse=501)


@pytest.fixture
def experiment_config(resonator_plan):
    """Small single-unit ensemble that runs in well under a second."""
    return schemas.ExperimentConfig(
        name="unit-mc",
        array=schemas.ArrayConfig(arrangement="linear", n_qubits=1),
        sweep=resonator_plan,
        variation=schemas.VariationConfig(delta=0.01, n_runs=3, seed=7),
    )


@pytest.fixture
def experiment_payload(experiment_config):
    """The small ensemble as a JSON request body."""
    return experiment_config.model_dump(mode="json")


@pytest.fixture
def unit_netlist_text():
    """A hand-written unit-volt divider in native syntax."""
    return (
        ".title divider\n"
        "V1 in 0 AC 1\n"
        "Rs1 in out 50\n"
        "RL out 0 50\n"
        "C1 out 0 30f\n"
        ".probe out\n"
        ".end\n"
    )
