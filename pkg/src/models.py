# src/models.py
from sqlalchemy import JSON, Column, DateTime, Float, Integer, String, UniqueConstraint
from sqlalchemy.sql import func

from .database import Base


class StageRun(Base):
    """One completed pipeline stage (e.g. train for seed 2024, or unlearn D2D-R)."""
    __tablename__ = "stage_runs"

    id = Column(Integer, primary_key=True, index=True)
    config_hash = Column(String, index=True, nullable=False)
    stage = Column(String, index=True, nullable=False)  # prepare, train, unlearn, retrain, attack, eval, analysis
    seed = Column(Integer, nullable=False, default=-1)  # -1 for seed-independent stages
    method = Column(String, nullable=False, default="")  # original, U2U-R, D2D-R, Retrain
    status = Column(String, default="done", nullable=False)
    wall_time = Column(Float, nullable=False, default=0.0)
    outputs = Column(JSON, nullable=False, default=list)  # produced file paths
    created_at = Column(DateTime(timezone=True), server_default=func.now())
    __table_args__ = (UniqueConstraint("config_hash", "stage", "seed", "method", name="_stage_cell_uc"),)
