import pytest

from uwinfer import pipeline, quant, synth


@pytest.fixture(scope="session")
def dataset():
    return synth.synth_dataset(synth.SyntheticDatasetSpec())


@pytest.fixture(scope="session")
def trained(dataset):
    return pipeline.run_training(dataset, pipeline.TrainingParams())


@pytest.fixture(scope="session")
def quantized(trained):
    return quant.quantize(trained.model)
