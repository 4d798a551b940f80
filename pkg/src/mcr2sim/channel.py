"""MIMO multiple-access channel with Rician fading and a link budget.

Each device transmits over ``T`` slots; the per-slot channel matrices are
assembled into a block-diagonal per-device matrix and concatenated across
devices, so the whole transmission is one linear map applied to the stacked
transmit-domain feature vector.

Real mode (used by the 3-D sphere experiment) draws i.i.d. unit-variance
real Gaussian entries with no path loss or line-of-sight structure.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import block_diag, rand_cn

__all__ = [
    "SystemDims",
    "LinkBudget",
    "ChannelRealization",
    "draw_channel",
    "transmit",
    "noise_power",
]


@dataclass(frozen=True)
class SystemDims:
    """Scenario dimensions.

    ``feature_dims[k]`` is the real feature dimension of device ``k``; the
    transmit-domain (stream) dimension is half of it in complex mode.
    """

    feature_dims: tuple
    tx_antennas: tuple
    rx_antennas: int
    slots: int = 1
    mode: str = "complex"

    def __post_init__(self):
        object.__setattr__(self, "feature_dims", tuple(int(d) for d in self.feature_dims))
        object.__setattr__(self, "tx_antennas", tuple(int(n) for n in self.tx_antennas))
        if len(self.feature_dims) != len(self.tx_antennas):
            raise ValueError("need one feature dim and one antenna count per device")
        if self.mode not in ("real", "complex"):
            raise ValueError("mode must be 'real' or 'complex'")
        if min(self.feature_dims) < 1 or min(self.tx_antennas) < 1:
            raise ValueError("dimensions must be >= 1")
        if self.rx_antennas < 1 or self.slots < 1:
            raise ValueError("dimensions must be >= 1")
        if self.mode == "complex" and any(d % 2 for d in self.feature_dims):
            raise ValueError("complex mode requires even feature dims")

    @property
    def devices(self):
        return len(self.feature_dims)

    @property
    def feature_dim(self):
        return sum(self.feature_dims)

    @property
    def stream_dims(self):
        if self.mode == "real":
            return self.feature_dims
        return tuple(d // 2 for d in self.feature_dims)

    @property
    def stream_dim(self):
        return sum(self.stream_dims)

    def to_json(self):
        return {
            "feature_dims": list(self.feature_dims),
            "tx_antennas": list(self.tx_antennas),
            "rx_antennas": self.rx_antennas,
            "slots": self.slots,
            "mode": self.mode,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            feature_dims=obj["feature_dims"],
            tx_antennas=obj["tx_antennas"],
            rx_antennas=int(obj["rx_antennas"]),
            slots=int(obj.get("slots", 1)),
            mode=obj.get("mode", "complex"),
        )


@dataclass(frozen=True)
class LinkBudget:
    """Link budget: bandwidth, noise density, distance, Rician factor and
    per-device power budgets.

    The noise power is ``N0 * B`` with the density converted from dBm/Hz,
    unless ``noise_power_w`` overrides it (used in real mode where the
    budget is specified through a transmit SNR).  The path loss follows
    ``32.6 + 36.7 log10(d)`` dB.
    """

    bandwidth_hz: float = 1e4
    noise_density_dbm_hz: float = -170.0
    distance_m: float = 240.0
    rician_kappa: float = 1.0
    power_w: tuple = (1e-3,)
    noise_power_w: float = None

    def __post_init__(self):
        object.__setattr__(self, "power_w", tuple(float(p) for p in np.atleast_1d(self.power_w)))
        if self.bandwidth_hz <= 0.0:
            raise ValueError("bandwidth must be positive")
        if self.rician_kappa < 0.0:
            raise ValueError("Rician factor must be nonnegative")
        if min(self.power_w) <= 0.0:
            raise ValueError("power budgets must be positive")
        if self.noise_power() <= 0.0:
            raise ValueError("noise power must be positive")

    @property
    def pathloss_db(self):
        return 32.6 + 36.7 * np.log10(self.distance_m)

    @property
    def path_gain(self):
        return 10.0 ** (-self.pathloss_db / 10.0)

    def noise_power(self):
        if self.noise_power_w is not None:
            return float(self.noise_power_w)
        return 10.0 ** ((self.noise_density_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz

    def power_for(self, devices):
        if len(self.power_w) == devices:
            return self.power_w
        if len(self.power_w) == 1:
            return self.power_w * devices
        raise ValueError("power budget count does not match device count")

    def to_json(self):
        return {
            "bandwidth_hz": self.bandwidth_hz,
            "noise_density_dbm_hz": self.noise_density_dbm_hz,
            "distance_m": self.distance_m,
            "rician_kappa": self.rician_kappa,
            "power_w": list(self.power_w),
            "noise_power_w": self.noise_power_w,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            bandwidth_hz=float(obj.get("bandwidth_hz", 1e4)),
            noise_density_dbm_hz=float(obj.get("noise_density_dbm_hz", -170.0)),
            distance_m=float(obj.get("distance_m", 240.0)),
            rician_kappa=float(obj.get("rician_kappa", 1.0)),
            power_w=obj.get("power_w", [1e-3]),
            noise_power_w=obj.get("noise_power_w"),
        )


def noise_power(budget):
    """Receiver noise power in watts for a :class:`LinkBudget`."""
    return budget.noise_power()


@dataclass
class ChannelRealization:
    """One draw of the multi-slot multiple-access channel.

    ``per_slot[k]`` has shape ``(T, N_r, N_tk)``.  ``block(k)`` is the
    block-diagonal per-device matrix of shape ``(T N_r, T N_tk)`` and ``H``
    concatenates those blocks across devices.
    """

    per_slot: list
    noise_power: float
    mode: str = "complex"

    def __post_init__(self):
        self.per_slot = [np.asarray(h) for h in self.per_slot]
        t = self.per_slot[0].shape[0]
        if any(h.shape[0] != t for h in self.per_slot):
            raise ValueError("all devices must share the slot count")
        self._blocks = [block_diag(list(h)) for h in self.per_slot]
        self._H = np.concatenate(self._blocks, axis=1)

    @property
    def devices(self):
        return len(self.per_slot)

    @property
    def slots(self):
        return self.per_slot[0].shape[0]

    @property
    def rx_antennas(self):
        return self.per_slot[0].shape[1]

    def block(self, k):
        return self._blocks[k]

    @property
    def H(self):
        return self._H

    def to_json(self):
        return {
            "mode": self.mode,
            "noise_power": self.noise_power,
            "per_slot": [_encode_array(h) for h in self.per_slot],
        }

    @classmethod
    def from_json(cls, obj):
        per_slot = [_decode_array(h) for h in obj["per_slot"]]
        return cls(per_slot=per_slot, noise_power=float(obj["noise_power"]),
                   mode=obj.get("mode", "complex"))


def _encode_array(a):
    """JSON-safe encoding: shape plus interleaved real/imag values."""
    a = np.asarray(a)
    if np.iscomplexobj(a):
        flat = np.empty(2 * a.size)
        flat[0::2] = a.real.ravel()
        flat[1::2] = a.imag.ravel()
        return {"shape": list(a.shape), "complex": True, "data": flat.tolist()}
    return {"shape": list(a.shape), "complex": False, "data": a.ravel().tolist()}


def _decode_array(obj):
    data = np.asarray(obj["data"], dtype=float)
    if obj["complex"]:
        a = data[0::2] + 1j * data[1::2]
    else:
        a = data
    return a.reshape(obj["shape"])


def draw_channel(dims, budget, block_fading=True, seed=0):
    """Draw one :class:`ChannelRealization`.

    Complex mode: each slot matrix is
    ``sqrt(g) (sqrt(kappa/(1+kappa)) H_los + sqrt(1/(1+kappa)) H_w)`` with
    ``H_w`` i.i.d. standard circular Gaussian, ``H_los`` the all-ones matrix
    and ``g`` the linear path gain.  With ``block_fading`` one draw is
    reused for all slots, otherwise slots fade independently.

    Real mode: i.i.d. standard real Gaussian entries, no path loss or
    line-of-sight structure.
    """
    rng = np.random.default_rng(seed)
    t, nr = dims.slots, dims.rx_antennas
    per_slot = []
    for k in range(dims.devices):
        nt = dims.tx_antennas[k]
        if dims.mode == "real":
            if block_fading:
                h = rng.standard_normal((nr, nt))
                hk = np.broadcast_to(h, (t, nr, nt)).copy()
            else:
                hk = rng.standard_normal((t, nr, nt))
        else:
            kappa = budget.rician_kappa
            los = np.ones((nr, nt))
            w_los = np.sqrt(kappa / (1.0 + kappa))
            w_sc = np.sqrt(1.0 / (1.0 + kappa))
            g = np.sqrt(budget.path_gain)
            if block_fading:
                hw = rand_cn(rng, (nr, nt))
                h = g * (w_los * los + w_sc * hw)
                hk = np.broadcast_to(h, (t, nr, nt)).copy()
            else:
                hw = rand_cn(rng, (t, nr, nt))
                hk = g * (w_los * los[None] + w_sc * hw)
        per_slot.append(hk)
    return ChannelRealization(per_slot=per_slot, noise_power=budget.noise_power(),
                              mode=dims.mode)


def draw_noise(chan, shape, rng):
    """Receiver noise with per-component power ``chan.noise_power``."""
    sigma = np.sqrt(chan.noise_power)
    if chan.mode == "real":
        return sigma * rng.standard_normal(shape)
    return sigma * rand_cn(rng, shape)


def transmit(chan, precoders, z, seed=0):
    """Received signal ``H V z + n`` for one or more feature vectors.

    ``z`` may be a single transmit-domain vector or a matrix with one
    vector per column.  Noise is deterministic for a fixed seed.
    """
    v = precoders.assembled
    if v.shape[0] != chan.H.shape[1]:
        raise ValueError("precoder rows do not match channel columns")
    z = np.asarray(z)
    if z.shape[0] != v.shape[1]:
        raise ValueError("feature dimension does not match precoder columns")
    rng = np.random.default_rng(seed)
    clean = chan.H @ (v @ z)
    return clean + draw_noise(chan, clean.shape, rng)
