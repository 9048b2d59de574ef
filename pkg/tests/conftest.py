import json

import numpy as np
import pytest

from core.dataset import WindowSet
from core.model import CrnnConfig
from core.tensor import Rng

TOY_CLASSES = ["Healthy", "Suspected", "Inner-race-fault", "Rolling-element-fault"]


@pytest.fixture
def rng():
    return Rng(0)


@pytest.fixture
def toy_config():
    return CrnnConfig(in_channels=2, window_len=20, num_classes=4, conv_filters=4, conv_kernel=5,
                      pool_size=2, lstm_units=3)


def separable_set(per_class: int = 4, window_len: int = 20, noise: float = 0.05, seed: int = 0) -> WindowSet:
    """Four classes pointing along +ch0, +ch1, -ch0, -ch1 plus a little noise"""
    gen = np.random.default_rng(seed)
    directions = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
    samples, labels = [], []
    for label, direction in enumerate(directions):
        block = np.broadcast_to(np.array(direction), (per_class, window_len, 2)).copy()
        samples.append(block + noise * gen.standard_normal(block.shape))
        labels.extend([label] * per_class)
    return WindowSet(np.concatenate(samples), np.array(labels), list(TOY_CLASSES))


@pytest.fixture
def toy_set():
    return separable_set()


def small_synth_spec(channels: int = 2, duration_s: float = 0.64, sample_rate_hz: float = 2000.0) -> dict:
    return {
        "sample_rate_hz": sample_rate_hz,
        "duration_s": duration_s,
        "channels": channels,
        "seed": 3,
        "impulse_decay_s": 0.005,
        "classes": [
            {"name": "Healthy", "rotation_hz": 33.0, "noise_std": 0.05},
            {"name": "Suspected", "rotation_hz": 33.0, "fault_hz": 60.0, "impulse_amplitude": 2.0, "noise_std": 0.1},
            {"name": "Inner-race-fault", "rotation_hz": 33.0, "fault_hz": 297.0, "impulse_amplitude": 4.0,
             "noise_std": 0.1},
            {"name": "Rolling-element-fault", "rotation_hz": 33.0, "fault_hz": 140.0, "impulse_amplitude": 3.0,
             "noise_std": 0.1},
        ],
    }


@pytest.fixture
def synth_spec_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(small_synth_spec()), encoding="utf-8")
    return path
