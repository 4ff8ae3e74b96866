import numpy as np
import pytest

from advcomp import ConfigurationError, ImageBatch, LoadError, load_dataset, save_dataset
from advcomp.data import MAGIC, gaussian_blobs, to_float32_grid, two_moons_grid


def test_round_trip(tmp_path, blobs):
    save_dataset(blobs, tmp_path / "d.adset")
    back = load_dataset(tmp_path / "d.adset")
    assert np.array_equal(back.data, blobs.data)
    assert np.array_equal(back.labels, blobs.labels)
    assert back.num_classes == blobs.num_classes


def test_header_layout(tmp_path):
    b = ImageBatch(np.array([[0.5, 0.25]]), np.array([1]), 3)
    save_dataset(b, tmp_path / "d")
    raw = (tmp_path / "d").read_bytes()
    assert raw[:8] == MAGIC
    assert np.frombuffer(raw[8:20], "<u4").tolist() == [1, 2, 3]
    assert len(raw) == 20 + 8 + 4


@pytest.mark.parametrize("mutate", ["magic", "truncate", "label"])
def test_corrupt_files_rejected(tmp_path, blobs, mutate):
    p = tmp_path / "d"
    save_dataset(blobs, p)
    raw = bytearray(p.read_bytes())
    if mutate == "magic":
        raw[0] = ord("X")
    elif mutate == "truncate":
        raw = raw[:-3]
    else:
        raw[-4:] = (99).to_bytes(4, "little")
    p.write_bytes(bytes(raw))
    with pytest.raises(LoadError):
        load_dataset(p)


def test_batch_validation():
    with pytest.raises(ConfigurationError):
        ImageBatch(np.array([[1.5]]), np.array([0]), 2)
    with pytest.raises(ConfigurationError):
        ImageBatch(np.array([[0.5]]), np.array([2]), 2)
    with pytest.raises(ConfigurationError):
        ImageBatch(np.array([0.5]), np.array([0]), 2)


def test_generators_are_seeded_and_on_float32_grid():
    a = gaussian_blobs(50, 4, 3, seed=1)
    b = gaussian_blobs(50, 4, 3, seed=1)
    assert np.array_equal(a.data, b.data)
    assert np.array_equal(a.data, to_float32_grid(a.data))
    m = two_moons_grid(40, 3, seed=2)
    assert m.dim == 2 and set(m.labels.tolist()) <= {0, 1, 2}
    assert np.array_equal(m.data, to_float32_grid(m.data))
