import os
from pathlib import Path

import pytest

from prorandconv.synthdigits import (
    TEST_IMAGES,
    TEST_LABELS,
    TRAIN_IMAGES,
    TRAIN_LABELS,
    build_corpus,
)

_REQUIRED = (TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS)


@pytest.fixture(scope="session")
def digits_dir(tmp_path_factory) -> Path:
    """Directory with IDX digit files: real MNIST if PRORANDCONV_MNIST points
    at it, otherwise the deterministic synthetic corpus."""
    env = os.environ.get("PRORANDCONV_MNIST")
    if env and all((Path(env) / n).exists() for n in _REQUIRED):
        return Path(env)
    d = tmp_path_factory.mktemp("digits")
    build_corpus(d)
    return d


@pytest.fixture(scope="session")
def using_real_mnist(digits_dir) -> bool:
    env = os.environ.get("PRORANDCONV_MNIST")
    return bool(env and Path(env) == digits_dir)
