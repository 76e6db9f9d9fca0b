from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from sptree.core.config import settings

engine = create_engine(
    settings.DATABASE_URL,
    connect_args={"check_same_thread": False} if settings.DATABASE_URL.startswith("sqlite") else {},
    pool_pre_ping=True,
)

SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

Base = declarative_base()


def init_db():
    """
    Create the run ledger tables if they do not exist yet
    """
    from sptree.models import RunLog  # noqa: F401
    Base.metadata.create_all(bind=SessionLocal.kw["bind"])
