# src/database.py

from functools import lru_cache
from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

REGISTRY_FILENAME = "registry.db"

Base = declarative_base()


@lru_cache(maxsize=None)
def get_session_factory(out_dir: str) -> sessionmaker:
    """
    One SQLite run registry per output directory. Tables are created on first use.
    """
    db_dir = Path(out_dir).resolve()
    db_dir.mkdir(parents=True, exist_ok=True)
    engine = create_engine(
        f"sqlite:///{db_dir / REGISTRY_FILENAME}", connect_args={"check_same_thread": False}
    )
    # Import the ORM models so their tables are registered on Base.metadata.
    from . import models  # noqa: F401
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)
