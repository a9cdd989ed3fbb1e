"""Client datasets for the federation scenarios.

Every scenario partitions a base pool of samples over K clients and then
applies a per-group transformation (label swap, image rotation, or none).
The synthetic pool is built from Gaussian class blobs so the whole pipeline
runs with no external files; MNIST-style IDX files can be plugged in as the
pool instead.

Two deliberate choices in the blob geometry:

* Class means come in close pairs (2p, 2p+1). The pairs are exactly the
  pairs the label-swap scenario exchanges, so disagreement between swap
  groups concerns classes the model can only tell apart late in training,
  the same way confusable digit pairs behave on real image data.
* Rotation-scenario means are built on rotation orbits: rotating class c's
  mean lands near another class's mean (strength set by
  ``rotation_collision``). Rotated digits genuinely resemble other digits,
  and this collision is what makes rotation groups irreconcilable for a
  single shared model rather than a fancy data augmentation.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, FormatError, ShapeError

KIND_IID = "iid"
KIND_LABEL_SWAP = "label_swap"
KIND_ROTATION = "image_rotation"
KIND_REGRESSION_TOY = "regression_toy"
KIND_ATTACK_IID = "attack_iid"

SCENARIO_KINDS = (KIND_IID, KIND_LABEL_SWAP, KIND_ROTATION,
                  KIND_REGRESSION_TOY, KIND_ATTACK_IID)

_DATA_TAG = 0xDA7A
_IDX_UBYTE = 0x08


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX-format buffer (the MNIST container) into an ndarray.

    Layout: two zero bytes, a type code (only unsigned byte, 0x08, is
    accepted), a dimension count, then that many big-endian uint32 sizes,
    then the payload. Images arrive as (N, rows, cols) uint8, labels as (N,).
    """
    if len(data) < 4:
        raise FormatError(f"IDX header needs 4 bytes, got {len(data)}")
    zero_a, zero_b, type_code, ndim = struct.unpack(">BBBB", data[:4])
    if zero_a != 0 or zero_b != 0:
        raise FormatError(f"bad IDX magic {data[:4].hex()}")
    if type_code != _IDX_UBYTE:
        raise FormatError(f"unsupported IDX type code 0x{type_code:02x}")
    if ndim < 1:
        raise FormatError("IDX dimension count must be >= 1")
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise FormatError(f"IDX header truncated: need {header_len} bytes, "
                          f"got {len(data)}")
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    expected = int(np.prod(dims))
    payload = data[header_len:]
    if len(payload) != expected:
        raise FormatError(f"IDX payload has {len(payload)} bytes, "
                          f"dimensions {dims} require {expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()


def load_idx(path) -> np.ndarray:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        return parse_idx(fh.read())


def rotate90(image: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Counterclockwise quarter turns of a square image."""
    image = np.asarray(image)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ShapeError(f"rotate90 needs a square 2-D image, got {image.shape}")
    return np.rot90(image, quarter_turns % 4)


def swap_labels(labels: np.ndarray, pair: tuple[int, int]) -> np.ndarray:
    """Exchange the two labels of ``pair``, leaving everything else alone."""
    a, b = pair
    out = np.asarray(labels).copy()
    mask_a = out == a
    mask_b = out == b
    out[mask_a] = b
    out[mask_b] = a
    return out


@dataclass
class ClientDataset:
    client_id: int
    train: tuple[np.ndarray, np.ndarray]
    test: tuple[np.ndarray, np.ndarray]
    group_id: int


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to materialize the client datasets deterministically."""

    kind: str
    num_clients: int
    num_groups: int
    train_per_client: int
    test_per_client: int
    seed: int
    # synthetic classifier pool
    num_classes: int = 10
    feature_dim: int = 32
    image_side: int = 8
    class_sep: float = 4.0
    pair_sep: float = 2.0
    sample_std: float = 0.6
    rotation_collision: float = 0.8
    nonneg_features: bool = False       # pixel-like inputs, clipped at zero
    # regression toy
    slopes: tuple[float, ...] = ()
    reg_noise_std: float = 0.0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ShapeError(f"unknown scenario kind {self.kind!r}")
        if self.num_clients < 1:
            raise ShapeError("num_clients must be >= 1")
        if not 1 <= self.num_groups <= self.num_clients:
            raise ShapeError("num_groups must be in [1, num_clients]")
        if self.train_per_client < 1 or self.test_per_client < 1:
            raise ShapeError("per-client sample counts must be >= 1")
        if self.kind == KIND_LABEL_SWAP and 2 * self.num_groups > self.num_classes:
            raise ShapeError("label_swap needs num_classes >= 2 * num_groups")
        if self.kind == KIND_ROTATION and self.num_groups > 4:
            raise ShapeError("image_rotation supports at most 4 groups")
        if self.kind == KIND_REGRESSION_TOY and len(self.slopes) != self.num_groups:
            raise ShapeError("regression_toy needs one slope per group")
        if not 0.0 <= self.rotation_collision <= 1.0:
            raise ShapeError("rotation_collision must be in [0, 1]")

    def group_of(self, client_id: int) -> int:
        """Clients are dealt round-robin, so group sizes differ by at most 1."""
        return client_id % self.num_groups

    def input_dim(self) -> int:
        if self.kind == KIND_REGRESSION_TOY:
            return 1
        if self.kind == KIND_ROTATION:
            return self.image_side * self.image_side
        return self.feature_dim


def _paired_blob_means(rng: np.random.Generator, num_classes: int, dim: int,
                       class_sep: float, pair_sep: float) -> np.ndarray:
    means = np.zeros((num_classes, dim))
    for p in range((num_classes + 1) // 2):
        center = class_sep * rng.normal(size=dim) / np.sqrt(dim)
        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction)
        a, b = 2 * p, 2 * p + 1
        means[a] = center + 0.5 * pair_sep * direction
        if b < num_classes:
            means[b] = center - 0.5 * pair_sep * direction
    return means


def _unit_image(rng: np.random.Generator, side: int) -> np.ndarray:
    img = rng.normal(size=(side, side))
    return img / np.linalg.norm(img)


def _rotation_orbit_means(rng: np.random.Generator, num_classes: int, side: int,
                          class_sep: float, collision: float) -> np.ndarray:
    """Class mean images arranged so rot90 maps each mean near another one.

    Classes are chained in cycles of four (one quarter turn per hop); a
    leftover pair shares a 180-degree-symmetric base so a two-cycle closes.
    ``collision`` = 0 gives independent means, 1 gives exact orbit closure.
    """
    means = np.zeros((num_classes, side, side))
    classes = list(range(num_classes))
    cycles: list[list[int]] = []
    while len(classes) >= 4:
        cycles.append(classes[:4])
        classes = classes[4:]
    if len(classes) == 2:
        cycles.append(classes)
    elif classes:
        cycles.append(classes)  # 1 or 3 stragglers: chain as far as it goes

    for cycle in cycles:
        if len(cycle) == 2:
            base = _unit_image(rng, side)
            first = base + np.rot90(base, 2)
        else:
            first = _unit_image(rng, side)
        first = first / np.linalg.norm(first)
        means[cycle[0]] = class_sep * first
        prev = means[cycle[0]]
        for c in cycle[1:]:
            mixed = (collision * np.rot90(prev, 1)
                     + (1.0 - collision) * class_sep * _unit_image(rng, side))
            means[c] = class_sep * mixed / np.linalg.norm(mixed)
            prev = means[c]
    return means


def _synthetic_pool(spec: ScenarioSpec, rng: np.random.Generator,
                    total: int) -> tuple[np.ndarray, np.ndarray]:
    labels = np.arange(total) % spec.num_classes
    if spec.kind == KIND_ROTATION:
        means = _rotation_orbit_means(rng, spec.num_classes, spec.image_side,
                                      spec.class_sep, spec.rotation_collision)
        means = means.reshape(spec.num_classes, -1)
    else:
        means = _paired_blob_means(rng, spec.num_classes, spec.feature_dim,
                                   spec.class_sep, spec.pair_sep)
    if spec.nonneg_features:
        means = np.abs(means)
    inputs = means[labels] + spec.sample_std * rng.normal(size=(total, means.shape[1]))
    if spec.nonneg_features:
        inputs = np.clip(inputs, 0.0, None)
    return inputs, labels


def _transform(spec: ScenarioSpec, group: int, inputs: np.ndarray,
               labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Apply the group's concept shift to both inputs and labels."""
    if spec.kind == KIND_LABEL_SWAP:
        pair = (2 * group, 2 * group + 1)
        return inputs, swap_labels(labels, pair)
    if spec.kind == KIND_ROTATION:
        side = int(round(np.sqrt(inputs.shape[1])))
        if side * side != inputs.shape[1]:
            raise ShapeError(f"inputs of width {inputs.shape[1]} are not square images")
        imgs = inputs.reshape(-1, side, side)
        rotated = np.rot90(imgs, group % 4, axes=(1, 2))
        return rotated.reshape(inputs.shape[0], -1).copy(), labels
    return inputs, labels


def build_scenario(spec: ScenarioSpec,
                   raw: tuple[np.ndarray, np.ndarray] | None = None
                   ) -> list[ClientDataset]:
    """Materialize all client datasets for a scenario.

    ``raw`` optionally supplies a real (images, labels) pool, e.g. from
    :func:`load_idx`; pixel pools are scaled to [0, 1]. Without it the
    synthetic blob pool is generated from the scenario seed. Clients draw
    disjoint sample ranges from one shuffled pool, so no sample is shared.
    """
    rng = np.random.default_rng([_DATA_TAG, spec.seed])
    per = spec.train_per_client + spec.test_per_client
    total = spec.num_clients * per

    if spec.kind == KIND_REGRESSION_TOY:
        clients = []
        for cid in range(spec.num_clients):
            g = spec.group_of(cid)
            x = rng.normal(0.0, 1.0, size=per)
            y = spec.slopes[g] * x
            if spec.reg_noise_std > 0:
                y = y + rng.normal(0.0, spec.reg_noise_std, size=per)
            xs = x.reshape(-1, 1)
            tr = slice(0, spec.train_per_client)
            te = slice(spec.train_per_client, per)
            clients.append(ClientDataset(cid, (xs[tr], y[tr]), (xs[te], y[te]), g))
        return clients

    if raw is not None:
        pool_x, pool_y = raw
        pool_x = np.asarray(pool_x)
        pool_y = np.asarray(pool_y)
        if pool_x.shape[0] != pool_y.shape[0]:
            raise ShapeError("image and label pools disagree on sample count")
        if pool_x.shape[0] < total:
            raise CapacityError(f"pool has {pool_x.shape[0]} samples, scenario "
                                f"needs {total}")
        if pool_x.ndim == 3:
            pool_x = pool_x.reshape(pool_x.shape[0], -1)
        pool_x = pool_x.astype(np.float64)
        if pool_x.max() > 1.0:
            pool_x = pool_x / 255.0
        pool_y = pool_y.astype(np.int64)
    else:
        pool_x, pool_y = _synthetic_pool(spec, rng, total)

    order = rng.permutation(pool_x.shape[0])[:total]
    clients = []
    for cid in range(spec.num_clients):
        g = spec.group_of(cid)
        idx = order[cid * per:(cid + 1) * per]
        x, y = _transform(spec, g, pool_x[idx], pool_y[idx])
        tr = slice(0, spec.train_per_client)
        te = slice(spec.train_per_client, per)
        clients.append(ClientDataset(cid, (x[tr], y[tr]), (x[te], y[te]), g))
    return clients
