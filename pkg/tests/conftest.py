from datetime import date

import pytest

from wardflow.hospitals import HospitalProfile
from wardflow.synthgen import GeneratorConfig, generate


SMALL_START = date(2023, 1, 9)
SMALL_END = date(2023, 4, 3)


@pytest.fixture(scope="session")
def small_config():
    return GeneratorConfig(
        seed=424242,
        hospitals=[
            HospitalProfile("HA", bed_count=867, has_icu=True, n_patients=700),
            HospitalProfile("HG", bed_count=130, has_icu=False, n_patients=150,
                            icu_department=None),
        ],
        date_range=(SMALL_START, SMALL_END),
    )


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory, small_config):
    """One modest two-hospital corpus shared across test modules."""
    root = tmp_path_factory.mktemp("extracts")
    result = generate(small_config, root)
    return {"root": root, "config": small_config, "result": result}


@pytest.fixture(scope="session")
def trained_ha(tmp_path_factory, small_corpus):
    """HA models trained once on the shared corpus."""
    from wardflow.serve.pipeline import train_hospital
    from wardflow.serve.store import PredictionStore

    base = tmp_path_factory.mktemp("trained")
    store = PredictionStore(base / "store.db")
    artifacts = base / "artifacts"
    results = train_hospital(small_corpus["root"], "HA", store, artifacts)
    return {
        "root": small_corpus["root"],
        "store": store,
        "store_path": base / "store.db",
        "artifacts": artifacts,
        "results": results,
        "latent": small_corpus["result"].latent,
    }
