"""
Synthetic bearing vibration for desk-scale runs.

Each class is a shaft-rotation sinusoid plus a train of one-sided,
exponentially decaying impulses repeating at the class's fault frequency,
plus seeded Gaussian noise. Channels see the same impulses with a phase
shifted rotation component and a per-channel attenuation.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List

import numpy as np

from core.errors import ConfigError
from core.signals import SignalMatrix
from core.tensor import Rng

logger = logging.getLogger(__name__)


@dataclass
class ClassSignature:
    name: str
    rotation_hz: float
    fault_hz: float = 0.0
    impulse_amplitude: float = 0.0
    noise_std: float = 0.0


@dataclass
class SynthSpec:
    classes: List[ClassSignature]
    sample_rate_hz: float = 20000.0
    duration_s: float = 1.024
    channels: int = 8
    seed: int = 0
    base_amplitude: float = 1.0
    impulse_decay_s: float = 0.001
    channel_attenuation: float = 0.5

    def validate(self):
        if not self.classes:
            raise ConfigError("synth spec needs at least one class")
        if self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise ConfigError("synth sample_rate_hz and duration_s must be > 0")
        if self.channels < 1:
            raise ConfigError(f"synth channels must be >= 1, got {self.channels}")
        if self.impulse_decay_s <= 0:
            raise ConfigError(f"synth impulse_decay_s must be > 0, got {self.impulse_decay_s}")
        if int(round(self.sample_rate_hz * self.duration_s)) < 1:
            raise ConfigError("synth duration is shorter than one sample")
        names = [signature.name for signature in self.classes]
        if len(set(names)) != len(names):
            raise ConfigError(f"synth class names must be unique, got {names}")
        nyquist = self.sample_rate_hz / 2
        for signature in self.classes:
            for name in ("rotation_hz", "fault_hz"):
                value = getattr(signature, name)
                if not 0 <= value < nyquist:
                    raise ConfigError(f"class {signature.name!r}: {name}={value} must be in [0, {nyquist}) "
                                      f"for sample rate {self.sample_rate_hz}")
            if signature.noise_std < 0:
                raise ConfigError(f"class {signature.name!r}: noise_std must be >= 0")

    @property
    def rows(self) -> int:
        return int(round(self.sample_rate_hz * self.duration_s))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SynthSpec":
        data = dict(data)
        try:
            classes = [ClassSignature(**c) for c in data.pop("classes")]
            return cls(classes=classes, **data)
        except (KeyError, TypeError) as e:
            raise ConfigError(f"invalid synth spec: {e}")


def impulse_train(spec: SynthSpec, signature: ClassSignature, t: np.ndarray) -> np.ndarray:
    """Impulses at (k + 1/2) / fault_hz, each starting at full amplitude on the nearest sample"""
    train = np.zeros_like(t)
    if signature.fault_hz <= 0 or signature.impulse_amplitude == 0:
        return train
    fs = spec.sample_rate_hz
    span = int(np.ceil(12 * spec.impulse_decay_s * fs))
    k = 0
    while True:
        onset = (k + 0.5) / signature.fault_hz
        if onset >= spec.duration_s:
            break
        start = int(round(onset * fs))
        stop = min(start + span, len(t))
        if start < len(t):
            dt = t[start:stop] - t[start]
            train[start:stop] += signature.impulse_amplitude * np.exp(-dt / spec.impulse_decay_s)
        k += 1
    return train


def synth_generate(spec: SynthSpec) -> Dict[str, SignalMatrix]:
    """One SignalMatrix per class, in class order; deterministic per seed"""
    spec.validate()
    rng = Rng(spec.seed)
    t = np.arange(spec.rows) / spec.sample_rate_hz
    signals: Dict[str, SignalMatrix] = {}
    for signature in spec.classes:
        impulses = impulse_train(spec, signature, t)
        values = np.empty((spec.rows, spec.channels))
        for ch in range(spec.channels):
            phase = np.pi * ch / spec.channels
            gain = 1.0 / (1.0 + spec.channel_attenuation * ch)
            values[:, ch] = spec.base_amplitude * np.sin(2 * np.pi * signature.rotation_hz * t + phase)
            values[:, ch] += gain * impulses
        if signature.noise_std > 0:
            values += rng.normal(values.shape, signature.noise_std)
        signals[signature.name] = SignalMatrix(values, spec.sample_rate_hz, label=signature.name)
        logger.debug("synthesized %s: %d x %d", signature.name, spec.rows, spec.channels)
    return signals

