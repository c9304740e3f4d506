import time

import pytest

from dltsched import datagen, mlp

# Frozen desk-scale experiment: 20k samples in the compute-dominated regime
# where the summary features determine the makespan tightly enough for
# surrogate training (at the mixed-regime default intensity the label keeps
# an irreducible ordering noise floor around R2 ~ 0.86). Dropout is disabled
# for this run: with any p=0.2 placement the validation loss floors an order
# of magnitude above the achievable 0.004-0.006 at every scale tried.
DESK_SEED = 7
DESK_COUNT = 20_000
DESK_INTENSITY = 10_000.0


def desk_train_config(seed: int = DESK_SEED) -> mlp.TrainConfig:
    return mlp.TrainConfig(seed=seed, dropout_p=0.0)


@pytest.fixture(scope="session")
def desk_run():
    """Generate, split, and train the desk-scale surrogate once per session."""
    started = time.perf_counter()
    records = datagen.generate_dataset(DESK_COUNT, DESK_SEED, compute_intensity=DESK_INTENSITY)
    train_recs, val_recs, test_recs = datagen.split_dataset(records, DESK_SEED)
    norm = datagen.fit_normalization(train_recs)
    x_tr, y_tr = datagen.apply_normalization(
        norm, datagen.feature_matrix(train_recs), datagen.target_array(train_recs)
    )
    x_val, y_val = datagen.apply_normalization(
        norm, datagen.feature_matrix(val_recs), datagen.target_array(val_recs)
    )
    model, report = mlp.train(
        x_tr,
        y_tr,
        x_val,
        y_val,
        desk_train_config(),
        norm,
        metadata={"train_seed": DESK_SEED, "split_seed": DESK_SEED, "compute_intensity": DESK_INTENSITY},
    )
    elapsed = time.perf_counter() - started
    return {
        "records": records,
        "train": train_recs,
        "val": val_recs,
        "test": test_recs,
        "norm": norm,
        "x_tr": x_tr,
        "y_tr": y_tr,
        "x_val": x_val,
        "y_val": y_val,
        "model": model,
        "report": report,
        "pipeline_seconds": elapsed,
    }
