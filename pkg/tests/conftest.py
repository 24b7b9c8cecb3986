"""Shared test fixtures."""

import pytest
from pathlib import Path
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from src.corpus import SynthCorpusSpec, generate_synth_corpus
from src.database import Base
from src.settings import AaeSettings, ExperimentSettings, SvmSettings, TrainSchedule

PROJECT_ROOT = Path(__file__).resolve().parent.parent
SAMPLE_CORPUS = PROJECT_ROOT / "data" / "sample_corpus.csv"


@pytest.fixture
def engine():
    """Create an in-memory SQLite database for testing."""
    engine = create_engine("sqlite:///:memory:")
    Base.metadata.create_all(engine)
    return engine


@pytest.fixture
def session(engine):
    """Create a database session for testing."""
    Session = sessionmaker(bind=engine)
    session = Session()
    yield session
    session.close()


@pytest.fixture
def sample_corpus_path():
    """The bundled 24-row corpus."""
    return SAMPLE_CORPUS


@pytest.fixture(scope="session")
def tiny_corpus():
    """4 classes x 15 rows, 3 sessions, 8 features: fast enough for full pipeline runs."""
    spec = SynthCorpusSpec.balanced(15, feature_dim=8, sessions=3)
    return generate_synth_corpus(spec, seed=3)


@pytest.fixture(scope="session")
def desk_corpus():
    """The desk-scale corpus: 4 classes x 200 rows, 5 sessions, 64 features."""
    return generate_synth_corpus(SynthCorpusSpec.balanced(200), seed=11)


@pytest.fixture
def fast_settings():
    """Experiment settings with a handful of epochs and small networks."""
    aae = AaeSettings(epochs=2, batch_size=16, encoder_hidden=(16, 8), decoder_hidden=(8, 16),
                      discriminator_hidden=(8, 8))
    return ExperimentSettings(
        master_seed=5,
        aae=aae,
        vanilla=TrainSchedule(gen_lr=1e-3, disc_lr=1e-3, epochs=2, batch_size=16),
        baseline=TrainSchedule(epochs=2, batch_size=16),
        improved=TrainSchedule(gen_lr=1e-3, disc_lr=1e-4, gen_steps_per_disc_step=5, epochs=2,
                               batch_size=16, init="from_decoder"),
        svm=SvmSettings(),
        n_synth=40,
        n_synth_test=40,
    )


@pytest.fixture
def tmp_csv_path(tmp_path):
    """Return a factory for creating temporary CSV files."""
    def _create_csv(filename: str, content: str) -> Path:
        csv_path = tmp_path / filename
        csv_path.write_text(content)
        return csv_path
    return _create_csv
