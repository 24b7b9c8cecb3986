"""Experiment ledger: SQLite tables of runs and their per-fold results."""

from datetime import datetime, timezone
from sqlalchemy import create_engine, Column, Integer, String, Float, DateTime, ForeignKey, JSON
from sqlalchemy.orm import declarative_base, relationship, sessionmaker, Session

Base = declarative_base()


class ExperimentRun(Base):
    """One scenario of one table-analog run."""

    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True)
    table_name = Column(String, nullable=False)  # "table1", "table2" or "table3"
    scenario = Column(String, nullable=False)
    master_seed = Column(Integer, default=0)
    mean_uar = Column(Float)
    config = Column(JSON)  # resolved settings, dotted keys
    created_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))

    folds = relationship("FoldRecord", back_populates="run", order_by="FoldRecord.fold",
                         cascade="all, delete-orphan")

    def __repr__(self):
        return f"<ExperimentRun {self.table_name}/{self.scenario} UAR={self.mean_uar:.2f}>"

    @property
    def fold_count(self) -> int:
        return len(self.folds)


class FoldRecord(Base):
    """A single fold's UAR and confusion matrix."""

    __tablename__ = "fold_records"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), nullable=False)
    fold = Column(Integer, nullable=False)
    held_out = Column(String)  # session id, or "cross-corpus"
    uar = Column(Float)
    confusion = Column(JSON)  # {"classes": [...], "counts": [[...], ...]}

    run = relationship("ExperimentRun", back_populates="folds")

    def __repr__(self):
        return f"<FoldRecord fold={self.fold} held_out={self.held_out} UAR={self.uar:.2f}>"


def get_engine(db_path: str = "runs/results.db"):
    """Create database engine."""
    return create_engine(f"sqlite:///{db_path}")


def init_db(db_path: str = "runs/results.db"):
    """Initialize the database with all tables."""
    engine = get_engine(db_path)
    Base.metadata.create_all(engine)
    return engine


def get_session(engine) -> Session:
    """Create a new database session."""
    Session = sessionmaker(bind=engine)
    return Session()


def record_report(session: Session, report, table_name: str) -> ExperimentRun:
    """
    Store an ExperimentReport with one FoldRecord per fold.

    Args:
        session: Database session
        report: experiments.ExperimentReport
        table_name: Table analog the report belongs to

    Returns:
        The committed ExperimentRun
    """
    run = ExperimentRun(
        table_name=table_name,
        scenario=report.scenario,
        master_seed=int(report.config.get("master_seed", 0)),
        mean_uar=report.mean_uar,
        config=dict(report.config),
    )
    for fold in report.folds:
        run.folds.append(FoldRecord(
            fold=fold.fold,
            held_out=fold.held_out,
            uar=fold.uar,
            confusion={
                "classes": list(fold.confusion.class_names),
                "counts": fold.confusion.counts.tolist(),
            },
        ))
    session.add(run)
    session.commit()
    return run


def get_runs(session: Session, table_name: str | None = None) -> list[ExperimentRun]:
    """Runs in insertion order, optionally for one table."""
    query = session.query(ExperimentRun)
    if table_name:
        query = query.filter(ExperimentRun.table_name == table_name)
    return query.order_by(ExperimentRun.id).all()
